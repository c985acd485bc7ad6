#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "rationalets/error.hpp"
#include "rationalets/rationale_base.hpp"
#include "rationalets/util.hpp"

using namespace rationalets;

namespace {

std::vector<Sample> labeled(std::initializer_list<int> labels) {
    std::vector<Sample> out;
    int i = 0;
    for (int l : labels) {
        char id[32];
        std::snprintf(id, sizeof(id), "traffic-%06d", i++);
        out.push_back(fixtures::tiny_traffic_sample(id, l));
    }
    return out;
}

BackendConfig rules(std::vector<MockRule> r) {
    BackendConfig c;
    c.rules = std::move(r);
    return c;
}

ChatRole role(Backend& b) { return {&b, "gpt-5", 0.7, 256}; }

const char* kClean = "- Occupancy climbs through the window -> demand is building\n- NO2 tracks Intensity -> congestion";

}  // namespace

TEST(ParseRationale, BulletStyles) {
    const auto p = parse_rationale(
        "Intro line\n- a -> b\n* c → d\n• e -> f\n1. g -> h\n2) i -> j\n+ k -> l\n");
    ASSERT_EQ(p.paths.size(), 6u);
    EXPECT_EQ(p.paths[0], (ReasoningPath{"a", "b"}));
    EXPECT_EQ(p.paths[1], (ReasoningPath{"c", "d"}));
    EXPECT_EQ(p.paths[2], (ReasoningPath{"e", "f"}));
    EXPECT_EQ(p.paths[3], (ReasoningPath{"g", "h"}));
    EXPECT_EQ(p.paths[4], (ReasoningPath{"i", "j"}));
    EXPECT_EQ(p.paths[5], (ReasoningPath{"k", "l"}));
}

TEST(ParseRationale, ContinuationAndFirstArrow) {
    const auto p = parse_rationale("- Occupancy rises\n  over three hours -> demand -> congestion\n");
    ASSERT_EQ(p.paths.size(), 1u);
    EXPECT_EQ(p.paths[0].observation, "Occupancy rises over three hours");
    EXPECT_EQ(p.paths[0].implication, "demand -> congestion");
}

TEST(ParseRationale, MissingArrowWarns) {
    const auto p = parse_rationale("- just an observation\n- x -> y");
    ASSERT_EQ(p.paths.size(), 2u);
    EXPECT_EQ(p.paths[0].implication, "");
    EXPECT_FALSE(p.warnings.empty());
}

TEST(ParseRationale, NoBulletsIsFormatError) {
    EXPECT_THROW(parse_rationale("Occupancy rises, so demand builds."), FormatError);
    EXPECT_THROW(parse_rationale(""), FormatError);
}

TEST(ParseRationale, RenderRoundTrip) {
    const std::vector<ReasoningPath> paths{{"a", "b"}, {"c", "d"}};
    EXPECT_EQ(render_paths(paths), "- a -> b\n- c -> d");
    EXPECT_EQ(parse_rationale(render_paths(paths)).paths, paths);
}

TEST(LeakScanner, FlagsEveryPlantedLeak) {
    for (const auto& l : fixtures::planted_leaks()) {
        EXPECT_FALSE(validate_no_leak(l.text, task_preset(l.task)).empty()) << l.text;
    }
}

TEST(LeakScanner, PassesCleanRationales) {
    for (const auto& c : fixtures::clean_rationales()) {
        const auto v = validate_no_leak(c.text, task_preset(c.task));
        EXPECT_TRUE(v.empty()) << c.text << " -> " << (v.empty() ? "" : v[0].match);
    }
}

TEST(LeakScanner, ReportsKindAndOffset) {
    const std::string text = "- Flow builds -> Occupancy will increase by 2";
    const auto v = validate_no_leak(text, traffic_task());
    ASSERT_FALSE(v.empty());
    bool meaning = false;
    for (const auto& x : v) {
        if (x.kind == LeakViolation::Kind::ClassMeaning) {
            meaning = true;
            EXPECT_EQ(x.offset, text.find("increase by 2"));
        }
    }
    EXPECT_TRUE(meaning);
    const auto label = validate_no_leak("- x -> Prediction: 2", traffic_task());
    ASSERT_EQ(label.size(), 1u);
    EXPECT_EQ(label[0].kind, LeakViolation::Kind::LabelToken);
}

TEST(RationaleBaseIo, SaveLoadRoundTrip) {
    const auto dir = fixtures::scratch_dir("base_io");
    Backend mock(rules({{"gold-standard", "", {kClean}}}));
    BuildPolicy policy;
    policy.created_at = "2026-01-01T00:00:00";
    const auto built = build_base(labeled({0, 1, 2}), traffic_task(), role(mock), mock, policy, dir);
    const auto loaded = load_base(dir);
    EXPECT_EQ(loaded, built);
    EXPECT_EQ(loaded.root, dir);
    EXPECT_EQ(loaded.manifest.temporal_encoder_id, "builtin-stats-v1");
    EXPECT_EQ(loaded.manifest.semantic_encoder_id, "mock-hash-256");
    EXPECT_EQ(loaded.temporal.dim, builtin_temporal_dim(2));
    EXPECT_EQ(loaded.semantic.dim, 256u);
    EXPECT_TRUE(std::filesystem::exists(dir / loaded.rationales[0].chart_ref));
    EXPECT_FALSE(std::filesystem::exists(dir / "checkpoint.jsonl"));
    EXPECT_EQ(loaded.rationales[2].label_text, "increase by 2");
}

TEST(RationaleBaseIo, TamperedTableFailsDigest) {
    const auto dir = fixtures::scratch_dir("base_tamper");
    Backend mock(rules({{"gold-standard", "", {kClean}}}));
    build_base(labeled({0, 1}), traffic_task(), role(mock), mock, BuildPolicy{}, dir);
    auto bytes = read_file(dir / "H_s.bin");
    bytes[5] ^= 0x01;
    write_file_atomic(dir / "H_s.bin", bytes);
    EXPECT_THROW(load_base(dir), ConsistencyError);
}

TEST(RationaleBaseIo, MisalignedBaseFailsValidation) {
    RationaleBase b;
    b.rationales.resize(2);
    b.temporal.append({1.0, 0.0});
    b.semantic.append({1.0});
    b.semantic.append({1.0});
    EXPECT_THROW(b.validate(), ConsistencyError);
    EXPECT_THROW(b.temporal.append({1.0}), ShapeError);
}

TEST(BuildBase, RegeneratesUntilClean) {
    const auto dir = fixtures::scratch_dir("base_regen");
    Backend mock(rules({{"gold-standard", "", {"- Occupancy will increase by 2 -> obvious", kClean}}}));
    const auto base = build_base(labeled({2}), traffic_task(), role(mock), mock, BuildPolicy{}, dir);
    ASSERT_EQ(base.size(), 1u);
    EXPECT_EQ(base.rationales[0].attempts, 2);
    EXPECT_FALSE(base.rationales[0].leak_warning);
    EXPECT_EQ(base.rationales[0].raw_text, kClean);
}

TEST(BuildBase, KeepsLeakyAfterBudgetWithWarning) {
    const auto dir = fixtures::scratch_dir("base_leaky");
    Backend mock(rules({{"gold-standard", "", {"- Flow builds -> labeled as 2"}}}));
    BuildPolicy policy;
    policy.max_regen = 2;
    const auto base = build_base(labeled({2}), traffic_task(), role(mock), mock, policy, dir);
    EXPECT_EQ(base.rationales[0].attempts, 3);
    EXPECT_TRUE(base.rationales[0].leak_warning);
}

TEST(BuildBase, UnbulletedReplyBecomesOnePath) {
    const auto dir = fixtures::scratch_dir("base_format");
    Backend mock(rules({{"gold-standard", "", {"Demand builds through the morning."}}}));
    BuildPolicy policy;
    policy.max_regen = 1;
    const auto base = build_base(labeled({1}), traffic_task(), role(mock), mock, policy, dir);
    EXPECT_TRUE(base.rationales[0].format_warning);
    ASSERT_EQ(base.rationales[0].paths.size(), 1u);
    EXPECT_EQ(base.rationales[0].paths[0].observation, "Demand builds through the morning.");
}

TEST(BuildBase, RejectsUnlabeledAndEmpty) {
    const auto dir = fixtures::scratch_dir("base_reject");
    Backend mock(rules({{"gold-standard", "", {kClean}}}));
    EXPECT_THROW(build_base({}, traffic_task(), role(mock), mock, BuildPolicy{}, dir), StateError);
    EXPECT_THROW(build_base({fixtures::tiny_traffic_sample()}, traffic_task(), role(mock), mock, BuildPolicy{}, dir),
                 TaskError);
}

TEST(BuildBase, ResumesFromCheckpoint) {
    const auto dir = fixtures::scratch_dir("base_resume");
    const auto samples = labeled({2, 1, 0});
    Backend embedder(BackendConfig{});
    {
        // No rule answers the "decrease" sample, so the first build stops there.
        Backend partial(rules({{"**increase by 2**", "", {kClean}}, {"**remain stable**", "", {kClean}}}));
        EXPECT_THROW(build_base(samples, traffic_task(), role(partial), embedder, BuildPolicy{}, dir), ReplayMissError);
        EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint.jsonl"));
    }
    Backend full(rules({{"gold-standard", "", {kClean}}}));
    const auto base = build_base(samples, traffic_task(), role(full), embedder, BuildPolicy{}, dir);
    EXPECT_EQ(base.size(), 3u);
    EXPECT_EQ(full.stats().transport_calls, 1u);
    EXPECT_EQ(base.ids(), (std::vector<std::string>{"traffic-000000", "traffic-000001", "traffic-000002"}));
}

TEST(BuildBase, RationalePromptNeedsLabel) {
    Backend mock(BackendConfig{});
    const auto chart = render_chart(fixtures::tiny_traffic_sample());
    EXPECT_THROW(build_rationale_prompt(fixtures::tiny_traffic_sample(), traffic_task(), role(mock), chart), TaskError);
    const auto req = build_rationale_prompt(fixtures::tiny_traffic_sample("x", 0), traffic_task(), role(mock), chart);
    EXPECT_EQ(req.model_id, "gpt-5");
    EXPECT_EQ(req.temperature, 0.7);
    EXPECT_EQ(req.image_count(), 1u);
}

TEST(ParseRationale, TotalOnArbitraryText) {
    std::mt19937_64 rng(123);
    const std::string alphabet = "-*+•→>0123456789.) \n\tabcXYZ\xe2\x80\xa2";
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1), len(0, 80);
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        for (std::size_t n = len(rng); n > 0; --n) s.push_back(alphabet[pick(rng)]);
        try {
            const auto p = parse_rationale(s);
            EXPECT_FALSE(p.paths.empty());
        } catch (const FormatError&) {
        }
    }
}

TEST(BuildBase, ResumedBaseMatchesUninterruptedBuild) {
    const auto samples = labeled({2, 1, 0, 1});
    Backend embedder(BackendConfig{});
    BuildPolicy policy;
    policy.created_at = "2026-01-01T00:00:00";
    Backend full(rules({{"gold-standard", "", {"{{digest:6}}\n" + std::string(kClean)}}}));

    const auto straight_dir = fixtures::scratch_dir("base_straight");
    const auto straight = build_base(samples, traffic_task(), role(full), embedder, policy, straight_dir);

    const auto resumed_dir = fixtures::scratch_dir("base_resumed");
    {
        Backend partial(rules({{"**increase by 2**", "", {"{{digest:6}}\n" + std::string(kClean)}},
                               {"**remain stable**", "", {"{{digest:6}}\n" + std::string(kClean)}}}));
        EXPECT_THROW(build_base(samples, traffic_task(), role(partial), embedder, policy, resumed_dir), ReplayMissError);
    }
    const auto resumed = build_base(samples, traffic_task(), role(full), embedder, policy, resumed_dir);
    EXPECT_EQ(base_content_digest(resumed), base_content_digest(straight));
    EXPECT_EQ(resumed, straight);
}

TEST(RationaleBaseIo, RowsAlignWithSampleIds) {
    const auto dir = fixtures::scratch_dir("base_align");
    Backend mock(rules({{"gold-standard", "", {kClean}}}));
    auto samples = labeled({0, 1, 2});
    samples[1].window(0, 0) = 5000.0;
    const auto base = build_base(samples, traffic_task(), role(mock), mock, BuildPolicy{}, dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        EXPECT_EQ(base.rationales[i].sample_id, samples[i].id);
        const auto expected = encode_temporal(tabularize(samples[i]), TemporalEncoderKind::BuiltinStats).values;
        for (std::size_t j = 0; j < expected.size(); ++j) {
            EXPECT_FLOAT_EQ(base.temporal.row(i)[j], static_cast<float>(expected[j]));
        }
    }
}
