#include <gtest/gtest.h>

#include <memory>

#include "fixtures.hpp"
#include "rationalets/error.hpp"
#include "rationalets/inference.hpp"
#include "rationalets/pipeline.hpp"
#include "rationalets/util.hpp"

using namespace rationalets;

namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + needle.size())) ++n;
    return n;
}

// Base and query splits of the traffic fixture with a mock-built base.
class InferenceEnv : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        const auto task = traffic_task();
        const auto series = load_dataset(fixtures::source_dir() / "fixtures" / "traffic_small.csv", default_schema(task));
        auto [b, q] = split(window_samples(series, task, 6), 0.75);
        base_samples_ = new std::vector<Sample>(std::move(b));
        queries_ = new std::vector<Sample>(std::move(q));
        BackendConfig cfg;
        cfg.rules = default_mock_rules(task);
        mock_ = new Backend(cfg);
        const auto dir = fixtures::scratch_dir("inference_base");
        base_ = new RationaleBase(
            build_base(*base_samples_, task, ChatRole{mock_, "gpt-5", 0.7, 1024}, *mock_, BuildPolicy{}, dir));
        pool_ = new ExemplarPool(ExemplarPool::from_samples(*base_samples_));
    }
    static void TearDownTestSuite() {
        delete pool_;
        delete base_;
        delete mock_;
        delete queries_;
        delete base_samples_;
    }

    InferenceRoles roles(Backend& b) const {
        InferenceRoles r;
        r.summarizer = {&b, "gpt-4o-mini", 0.0, 512};
        r.predictor = {&b, "gpt-4o-mini", 0.0, 1024};
        r.embedder = &b;
        return r;
    }

    InferenceParams params(const std::string& variant) const {
        InferenceParams p;
        p.variant = variant_from_name(variant);
        p.retrieval.seed = 5;
        return p;
    }

    static inline std::vector<Sample>* base_samples_ = nullptr;
    static inline std::vector<Sample>* queries_ = nullptr;
    static inline Backend* mock_ = nullptr;
    static inline RationaleBase* base_ = nullptr;
    static inline ExemplarPool* pool_ = nullptr;
};

}  // namespace

TEST(ParsePrediction, StrictJson) {
    const auto p = parse_prediction(R"({"reasoning": "Occupancy rose", "prediction": 2})", traffic_task(), 1);
    EXPECT_EQ(p.status, ParseStatus::Ok);
    EXPECT_EQ(p.label, 2);
    EXPECT_EQ(p.reasoning, "Occupancy rose");
    EXPECT_EQ(parse_prediction(R"({"reasoning":"r","prediction":"0"})", traffic_task(), 1).label, 0);
    EXPECT_EQ(parse_prediction(R"({"reasoning":"r","prediction":1.0})", traffic_task(), 0).label, 1);
}

TEST(ParsePrediction, FencedAndEmbeddedAreRecovered) {
    const auto fenced = parse_prediction("```json\n{\"reasoning\": \"x\", \"prediction\": 0}\n```", traffic_task(), 1);
    EXPECT_EQ(fenced.status, ParseStatus::Recovered);
    EXPECT_EQ(fenced.label, 0);
    const auto embedded =
        parse_prediction("Here you go: {\"reasoning\": \"x\", \"prediction\": 2} Hope it helps.", traffic_task(), 1);
    EXPECT_EQ(embedded.status, ParseStatus::Recovered);
    EXPECT_EQ(embedded.label, 2);
    const auto loose = parse_prediction("{'reasoning': \"a \\\"b\\\"\", 'prediction': 1,}", traffic_task(), 0);
    EXPECT_EQ(loose.status, ParseStatus::Recovered);
    EXPECT_EQ(loose.label, 1);
    EXPECT_EQ(loose.reasoning, "a \"b\"");
}

TEST(ParsePrediction, FailuresUseFallback) {
    for (const std::string reply : {"I think it goes up.", R"({"reasoning":"x","prediction":3})",
                                    R"({"prediction":1})", R"({"reasoning":"x","prediction":-1})", ""}) {
        const auto p = parse_prediction(reply, traffic_task(), 1);
        EXPECT_EQ(p.status, ParseStatus::Failed) << reply;
        EXPECT_EQ(p.label, 1) << reply;
        EXPECT_EQ(p.reasoning, reply);
    }
    EXPECT_EQ(parse_prediction(R"({"reasoning":"x","prediction":2})", power_task(), 0).status, ParseStatus::Failed);
}

TEST(Variants, NamesRoundTrip) {
    for (const auto& name : ablation_variant_names()) {
        const auto v = variant_from_name(name);
        EXPECT_EQ(v.name, name);
        EXPECT_EQ(variant_name(v.mode, v.flags, v.retrieval), name);
    }
    const auto full = variant_from_name("full");
    EXPECT_EQ(variant_name(full.mode, full.flags, full.retrieval), "full");
    EXPECT_FALSE(full.flags.include_chart_refs);
    EXPECT_FALSE(full.flags.include_labels);
    EXPECT_EQ(full.retrieval, RetrievalMode::Hybrid);
    for (const auto* m : {"textual-zs", "textual-cot", "textual-icl", "visual-zs", "visual-cot", "visual-icl"}) {
        EXPECT_EQ(variant_from_name(m).name, m);
    }
    EXPECT_EQ(variant_name(InferenceMode::RationaleGrounded, {true, false}, RetrievalMode::Random), "custom");
    EXPECT_THROW(variant_from_name("C.1"), ModeError);
}

TEST(Defaults, RetrievalAndRoles) {
    RetrievalParams p;
    EXPECT_EQ(p.k, 5u);
    EXPECT_EQ(p.lambda, 0.8);
    EXPECT_EQ(p.mode, RetrievalMode::Hybrid);
    RunConfig c;
    EXPECT_EQ(c.k, 5u);
    EXPECT_EQ(c.lambda, 0.8);
    EXPECT_EQ(c.variant, "full");
    EXPECT_EQ(c.summarizer.temperature, 0.0);
    EXPECT_EQ(c.predictor.temperature, 0.0);
}

TEST(Summarize, EmptyReplyIsSummaryError) {
    BackendConfig cfg;
    cfg.rules = {{"factual summary", "", {"   "}}};
    Backend b(cfg);
    const auto chart = render_chart(fixtures::tiny_traffic_sample());
    EXPECT_THROW(summarize("q", chart, traffic_task(), {&b, "gpt-4o-mini", 0.0, 512}), SummaryError);
}

TEST_F(InferenceEnv, RationaleGroundedRecord) {
    const auto& q = queries_->front();
    const auto rec = infer(q, base_, nullptr, traffic_task(), params("full"), roles(*mock_));
    EXPECT_TRUE(rec.stage.empty()) << rec.error;
    EXPECT_EQ(rec.parse_status, ParseStatus::Ok);
    ASSERT_EQ(rec.retrieved_ids.size(), 5u);
    const auto ids = base_->ids();
    for (std::size_t i = 0; i < rec.retrieved_ids.size(); ++i) {
        const auto it = std::find(ids.begin(), ids.end(), rec.retrieved_ids[i]);
        ASSERT_NE(it, ids.end());
        EXPECT_EQ(base_->rationales[static_cast<std::size_t>(it - ids.begin())].label, rec.retrieved_labels[i]);
    }
    EXPECT_FALSE(rec.summary_text.empty());
    EXPECT_EQ(count(rec.prompt_review, "<image>"), 1u);
    EXPECT_EQ(count(rec.prompt_review, "Outcome:"), 0u);
    EXPECT_EQ(count(rec.prompt_review, "Rationale "), 5u);
    EXPECT_EQ(rec.true_label, q.label);
    EXPECT_GT(rec.prompt_tokens, 0);
}

TEST_F(InferenceEnv, AblationsChangePromptShape) {
    const auto& q = queries_->front();
    struct Case {
        std::string variant;
        std::size_t images;
        std::size_t outcomes;
    };
    for (const auto& c : std::vector<Case>{{"A.1", 6, 0}, {"A.2", 1, 5}, {"A.3", 6, 5}, {"B.1", 1, 0},
                                           {"B.2", 1, 0}, {"B.3", 1, 0}}) {
        const auto rec = infer(q, base_, nullptr, traffic_task(), params(c.variant), roles(*mock_));
        EXPECT_TRUE(rec.stage.empty()) << c.variant << ": " << rec.error;
        EXPECT_EQ(rec.variant, c.variant);
        EXPECT_EQ(count(rec.prompt_review, "<image>"), c.images) << c.variant;
        EXPECT_EQ(count(rec.prompt_review, "Outcome:"), c.outcomes) << c.variant;
        EXPECT_EQ(rec.retrieved_ids.size(), 5u);
    }
}

TEST_F(InferenceEnv, RetrievalAblationsUseTheirWeights) {
    const auto& q = queries_->front();
    const auto b1 = infer(q, base_, nullptr, traffic_task(), params("B.1"), roles(*mock_));
    const auto b2 = infer(q, base_, nullptr, traffic_task(), params("B.2"), roles(*mock_));
    ASSERT_TRUE(b1.retrieval && b2.retrieval);
    for (const auto& e : b1.retrieval->entries) EXPECT_EQ(e.sim_final, e.sim_s);
    for (const auto& e : b2.retrieval->entries) EXPECT_EQ(e.sim_final, e.sim_b);
}

TEST_F(InferenceEnv, BaselinesSkipSummaryAndBase) {
    BackendConfig cfg;
    cfg.rules = default_mock_rules(traffic_task());
    Backend fresh(cfg);
    const auto& q = queries_->front();
    for (const auto* mode : {"textual-zs", "textual-cot", "visual-zs", "visual-cot"}) {
        const auto rec = infer(q, nullptr, nullptr, traffic_task(), params(mode), roles(fresh));
        EXPECT_TRUE(rec.stage.empty()) << mode << ": " << rec.error;
        EXPECT_TRUE(rec.summary_text.empty());
        EXPECT_TRUE(rec.retrieved_ids.empty());
        EXPECT_EQ(rec.prompt_review.find("reasoning paths"), std::string::npos);
    }
    // one predictor call per mode, nothing else
    EXPECT_EQ(fresh.stats().transport_calls, 4u);
    const auto textual = infer(q, nullptr, nullptr, traffic_task(), params("textual-zs"), roles(fresh));
    EXPECT_EQ(count(textual.prompt_review, "<image>"), 0u);
    EXPECT_NE(textual.prompt_review.find("timestamp"), std::string::npos);
}

TEST_F(InferenceEnv, IclUsesPoolNeighbours) {
    const auto& q = queries_->front();
    for (const auto* mode : {"textual-icl", "visual-icl"}) {
        const auto rec = infer(q, nullptr, pool_, traffic_task(), params(mode), roles(*mock_));
        EXPECT_TRUE(rec.stage.empty()) << rec.error;
        EXPECT_EQ(count(rec.prompt_review, "Example "), 5u) << mode;
        EXPECT_EQ(count(rec.prompt_review, "Label: "), 5u) << mode;
    }
    const auto missing = infer(q, nullptr, nullptr, traffic_task(), params("textual-icl"), roles(*mock_));
    EXPECT_EQ(missing.stage, "prompt");
    EXPECT_EQ(missing.parse_status, ParseStatus::Failed);

    const auto& member = base_samples_->front();
    const auto qt = encode_temporal(tabularize(member), TemporalEncoderKind::BuiltinStats);
    for (auto i : pool_->nearest(qt.values, 5, member.id)) EXPECT_NE(pool_->samples[i].id, member.id);
}

TEST_F(InferenceEnv, MissingBaseIsStageFailure) {
    const auto rec = infer(queries_->front(), nullptr, nullptr, traffic_task(), params("full"), roles(*mock_));
    EXPECT_EQ(rec.stage, "retrieval");
    EXPECT_EQ(rec.parse_status, ParseStatus::Failed);
    EXPECT_EQ(rec.prediction, 0);
}

TEST_F(InferenceEnv, SummaryFailureIsTagged) {
    BackendConfig cfg;
    cfg.rules = {{"'reasoning' and 'prediction' keys", "", {R"({"reasoning":"r","prediction":1})"}}};
    Backend no_summary(cfg);
    auto p = params("full");
    p.fallback_label = 2;
    const auto rec = infer(queries_->front(), base_, nullptr, traffic_task(), p, roles(no_summary));
    EXPECT_EQ(rec.stage, "summary");
    EXPECT_EQ(rec.prediction, 2);
}

TEST_F(InferenceEnv, DeterministicRecords) {
    for (const auto* v : {"full", "B.3", "A.3"}) {
        const auto a = infer((*queries_)[2], base_, nullptr, traffic_task(), params(v), roles(*mock_));
        const auto b = infer((*queries_)[2], base_, nullptr, traffic_task(), params(v), roles(*mock_));
        EXPECT_EQ(to_json(a), to_json(b)) << v;
        EXPECT_EQ(a.prompt_review, b.prompt_review) << v;
    }
}

TEST_F(InferenceEnv, RecordJsonRoundTrip) {
    const auto rec = infer(queries_->front(), base_, nullptr, traffic_task(), params("full"), roles(*mock_));
    EXPECT_EQ(to_json(record_from_json(to_json(rec))), to_json(rec));
}

TEST_F(InferenceEnv, RunQueriesWritesLayout) {
    const auto dir = fixtures::scratch_dir("run_layout");
    const auto prepared =
        prepare_queries(*queries_, traffic_task(), InferenceMode::RationaleGrounded, roles(*mock_), ChartStyle{}, 2);
    RunOptions opts;
    opts.audit = true;
    const auto recs = run_queries(prepared, base_, nullptr, traffic_task(), params("full"), roles(*mock_), opts, dir, {});
    EXPECT_EQ(recs.size(), queries_->size());
    EXPECT_EQ(load_records(dir).size(), recs.size());
    EXPECT_TRUE(std::filesystem::exists(dir / "retrieval.jsonl"));
    EXPECT_TRUE(std::filesystem::exists(dir / "prompts" / (queries_->front().id + ".txt")));
    EXPECT_TRUE(std::filesystem::exists(dir / "charts" / (queries_->front().id + ".png")));
    const auto manifest = nlohmann::json::parse(read_file(dir / "manifest"));
    EXPECT_EQ(manifest.at("variant"), "full");
    EXPECT_EQ(manifest.at("K"), 5);
    EXPECT_EQ(manifest.at("complete"), true);
}

TEST_F(InferenceEnv, TextualZeroShotCarriesFullTable) {
    const auto& q = queries_->front();
    const auto rec = infer(q, nullptr, nullptr, traffic_task(), params("textual-zs"), roles(*mock_));
    EXPECT_NE(rec.prompt_review.find(serialize_window(q)), std::string::npos);
    EXPECT_NE(rec.prompt_review.find("0 (decreases by >2), 1 (changes within [-2, 2])"), std::string::npos);
    const auto table = serialize_window(q);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n') + (table.back() == '\n' ? 0 : 1), 13);
    for (const auto* v : {"NO2", "WindSpeed", "Temperature", "Humidity", "SolarRad", "Intensity", "Occupancy"}) {
        EXPECT_NE(table.find(v), std::string::npos) << v;
    }
}

TEST_F(InferenceEnv, DefaultRetrievalParamsReachTheSet) {
    InferenceParams p;
    p.variant = variant_from_name("full");
    const auto rec = infer(queries_->front(), base_, nullptr, traffic_task(), p, roles(*mock_));
    ASSERT_TRUE(rec.retrieval.has_value());
    EXPECT_EQ(rec.retrieval->params.k, 5u);
    EXPECT_EQ(rec.retrieval->params.lambda, 0.8);
}
