#include "rationalets/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <regex>

#include "rationalets/error.hpp"
#include "rationalets/util.hpp"

namespace rationalets {

// ------------------------------------------------------------------ modes

namespace {

const std::vector<std::pair<InferenceMode, std::string>> kModeNames = {
    {InferenceMode::RationaleGrounded, "rationale-grounded"},
    {InferenceMode::TextualZeroShot, "textual-zs"},
    {InferenceMode::TextualCot, "textual-cot"},
    {InferenceMode::TextualIcl, "textual-icl"},
    {InferenceMode::VisualZeroShot, "visual-zs"},
    {InferenceMode::VisualCot, "visual-cot"},
    {InferenceMode::VisualIcl, "visual-icl"},
};

}  // namespace

std::string to_string(InferenceMode mode) {
    for (const auto& [m, n] : kModeNames) {
        if (m == mode) return n;
    }
    return "rationale-grounded";
}

InferenceMode inference_mode_from_string(const std::string& s) {
    for (const auto& [m, n] : kModeNames) {
        if (n == s) return m;
    }
    std::string known;
    for (const auto& [m, n] : kModeNames) known += (known.empty() ? "" : ", ") + n;
    throw ModeError("unknown mode '" + s + "' (" + known + ")");
}

bool uses_rationale_base(InferenceMode mode) noexcept { return mode == InferenceMode::RationaleGrounded; }

bool is_icl(InferenceMode mode) noexcept {
    return mode == InferenceMode::TextualIcl || mode == InferenceMode::VisualIcl;
}

const std::vector<std::string>& ablation_variant_names() {
    static const std::vector<std::string> names = {"A.1", "A.2", "A.3", "B.1", "B.2", "B.3"};
    return names;
}

Variant variant_from_name(const std::string& name) {
    Variant v;
    v.name = name;
    if (name == "full") return v;
    if (name == "A.1") {
        v.flags.include_chart_refs = true;
    } else if (name == "A.2") {
        v.flags.include_labels = true;
    } else if (name == "A.3") {
        v.flags.include_chart_refs = v.flags.include_labels = true;
    } else if (name == "B.1") {
        v.retrieval = RetrievalMode::SemanticOnly;
    } else if (name == "B.2") {
        v.retrieval = RetrievalMode::DataOnly;
    } else if (name == "B.3") {
        v.retrieval = RetrievalMode::Random;
    } else {
        v.mode = inference_mode_from_string(name == "rationale-grounded" ? "rationale-grounded" : name);
        v.name = to_string(v.mode);
        if (v.mode == InferenceMode::RationaleGrounded) v.name = "full";
    }
    return v;
}

std::string variant_name(InferenceMode mode, const AblationFlags& flags, RetrievalMode retrieval) {
    if (mode != InferenceMode::RationaleGrounded) return to_string(mode);
    const bool charts = flags.include_chart_refs;
    const bool labels = flags.include_labels;
    const bool ablated_retrieval = retrieval != RetrievalMode::Hybrid;
    if (ablated_retrieval && (charts || labels)) return "custom";
    if (charts && labels) return "A.3";
    if (charts) return "A.1";
    if (labels) return "A.2";
    switch (retrieval) {
        case RetrievalMode::SemanticOnly: return "B.1";
        case RetrievalMode::DataOnly: return "B.2";
        case RetrievalMode::Random: return "B.3";
        case RetrievalMode::Hybrid: break;
    }
    return "full";
}

std::string to_string(ParseStatus s) {
    switch (s) {
        case ParseStatus::Ok: return "ok";
        case ParseStatus::Recovered: return "recovered";
        case ParseStatus::Failed: return "failed";
    }
    return "failed";
}

ParseStatus parse_status_from_string(const std::string& s) {
    if (s == "ok") return ParseStatus::Ok;
    if (s == "recovered") return ParseStatus::Recovered;
    if (s == "failed") return ParseStatus::Failed;
    throw FormatError("unknown parse status '" + s + "'");
}

// ---------------------------------------------------------------- parsing

namespace {

std::optional<int> label_value(const nlohmann::json& v, const TaskSpec& task) {
    std::optional<long long> n;
    if (v.is_number_integer()) {
        n = v.get<long long>();
    } else if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::floor(d) == d && std::abs(d) < 1e6) n = static_cast<long long>(d);
    } else if (v.is_string()) {
        const std::string s = trim(v.get<std::string>());
        if (!s.empty() && s.size() < 6 && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
            n = std::stoll(s);
        }
    }
    if (!n || *n < 0 || *n >= static_cast<long long>(task.num_classes())) return std::nullopt;
    return static_cast<int>(*n);
}

std::optional<ParsedPrediction> from_object(const std::string& text, const TaskSpec& task) {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("reasoning") || !j.contains("prediction")) return std::nullopt;
    const auto label = label_value(j.at("prediction"), task);
    if (!label) return std::nullopt;
    ParsedPrediction p;
    p.reasoning = j.at("reasoning").is_string() ? j.at("reasoning").get<std::string>() : j.at("reasoning").dump();
    p.label = *label;
    return p;
}

std::string strip_fences(const std::string& s) {
    static const std::regex fence(R"(```[A-Za-z]*[ \t]*\r?\n?([\s\S]*?)```)");
    std::smatch m;
    if (std::regex_search(s, m, fence)) return trim(m[1].str());
    return s;
}

}  // namespace

ParsedPrediction parse_prediction(const std::string& reply, const TaskSpec& task, int fallback_label) {
    if (auto p = from_object(trim(reply), task)) {
        p->status = ParseStatus::Ok;
        return *p;
    }
    const std::string unfenced = strip_fences(reply);
    std::optional<ParsedPrediction> recovered = from_object(unfenced, task);
    if (!recovered) {
        const auto open = unfenced.find('{');
        const auto close = unfenced.rfind('}');
        if (open != std::string::npos && close != std::string::npos && close > open) {
            recovered = from_object(unfenced.substr(open, close - open + 1), task);
        }
    }
    if (!recovered) {
        static const std::regex pred_re(R"re(["']prediction["']\s*:\s*["']?\s*(\d+))re");
        static const std::regex reason_re(R"re(["']reasoning["']\s*:\s*"((?:[^"\\]|\\.)*)")re");
        std::smatch pm;
        std::smatch rm;
        if (std::regex_search(unfenced, pm, pred_re) && std::regex_search(unfenced, rm, reason_re)) {
            if (const auto label = label_value(nlohmann::json(pm[1].str()), task)) {
                ParsedPrediction p;
                const auto decoded = nlohmann::json::parse("\"" + rm[1].str() + "\"", nullptr, false);
                p.reasoning = decoded.is_string() ? decoded.get<std::string>() : rm[1].str();
                p.label = *label;
                recovered = p;
            }
        }
    }
    if (recovered) {
        recovered->status = ParseStatus::Recovered;
        return *recovered;
    }
    ParsedPrediction failed;
    failed.reasoning = reply;
    failed.label = fallback_label;
    failed.status = ParseStatus::Failed;
    return failed;
}

// --------------------------------------------------------------- stages

namespace {

// One extra attempt on transport failure, then the error propagates.
template <typename Fn>
auto with_stage_retry(Fn&& fn) {
    try {
        return fn();
    } catch (const TransportError&) {
        return fn();
    }
}

}  // namespace

Summary summarize(const std::string& query_id, const ChartImage& chart, const TaskSpec& task, const ChatRole& role) {
    if (role.backend == nullptr) throw ConfigError("summarizer role has no backend");
    const auto request = to_request(chart_summary_prompt(task, chart_data_url(chart)), role);
    const auto reply = with_stage_retry([&] { return role.backend->chat(request); });
    Summary s;
    s.query_id = query_id;
    s.text = trim(reply.text);
    s.prompt_tokens = reply.prompt_tokens;
    s.completion_tokens = reply.completion_tokens;
    if (s.text.empty()) throw SummaryError("summarizer returned an empty summary for '" + query_id + "'");
    return s;
}

PreparedQuery prepare_query(const Sample& query, const TaskSpec& task, InferenceMode mode, const InferenceRoles& roles,
                            const ChartStyle& style) {
    PreparedQuery q;
    q.sample = query;
    std::string stage = "chart";
    try {
        q.chart = render_chart(query, style);
        q.chart_url = chart_data_url(q.chart);
        if (is_icl(mode) || uses_rationale_base(mode)) {
            stage = "temporal-embedding";
            q.temporal = encode_temporal(tabularize(query), roles.temporal_encoder, roles.temporal_remote);
        }
        if (uses_rationale_base(mode)) {
            stage = "summary";
            q.summary = summarize(query.id, q.chart, task, roles.summarizer);
            stage = "semantic-embedding";
            if (roles.embedder == nullptr) throw ConfigError("no embedding backend configured");
            q.semantic = with_stage_retry([&] { return encode_text(q.summary->text, *roles.embedder); });
        }
    } catch (const std::exception& e) {
        q.failed_stage = stage;
        q.error = e.what();
    }
    return q;
}

std::vector<PreparedQuery> prepare_queries(const std::vector<Sample>& queries, const TaskSpec& task,
                                           InferenceMode mode, const InferenceRoles& roles, const ChartStyle& style,
                                           int jobs) {
    std::vector<PreparedQuery> out(queries.size());
    parallel_for(queries.size(), jobs,
                 [&](std::size_t i) { out[i] = prepare_query(queries[i], task, mode, roles, style); });
    return out;
}

ExemplarPool ExemplarPool::from_samples(std::vector<Sample> samples) {
    ExemplarPool pool;
    for (const auto& s : samples) {
        if (!s.label) throw TaskError("exemplar '" + s.id + "' has no label");
        pool.temporal.append(encode_temporal(tabularize(s), TemporalEncoderKind::BuiltinStats).values);
    }
    pool.samples = std::move(samples);
    return pool;
}

std::vector<std::size_t> ExemplarPool::nearest(const std::vector<double>& query_temporal, std::size_t k,
                                               const std::string& exclude_id) const {
    RetrievalParams p;
    p.k = k;
    p.lambda = 1.0;
    p.mode = RetrievalMode::DataOnly;
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    // The semantic side is unused at lambda = 1; a zero table keeps shapes valid.
    EmbeddingTable none;
    none.rows = samples.size();
    none.dim = 1;
    none.data.assign(samples.size(), 0.0f);
    const auto set = hybrid_top_k(exclude_id, query_temporal, {0.0}, ids, temporal, none, p);
    std::vector<std::size_t> out;
    for (const auto& e : set.entries) out.push_back(e.index);
    return out;
}

ChatRequest build_inference_prompt(const PreparedQuery& query, const RetrievalSet* retrieved, const RationaleBase* base,
                                   const ExemplarPool* pool, const TaskSpec& task, const InferenceParams& params,
                                   const ChatRole& predictor) {
    const auto& v = params.variant;
    switch (v.mode) {
        case InferenceMode::RationaleGrounded: {
            if (retrieved == nullptr || base == nullptr) throw ModeError("rationale-grounded mode needs retrieved rationales");
            std::vector<RationaleExemplar> ex;
            for (const auto& e : retrieved->entries) {
                const Rationale& r = base->rationales.at(e.index);
                RationaleExemplar x;
                x.text = r.text();
                if (v.flags.include_labels) x.label = r.label;
                if (v.flags.include_chart_refs) {
                    if (base->root.empty() || r.chart_ref.empty()) throw StateError("rationale base has no stored charts");
                    ChartImage img;
                    const std::string bytes = read_file(base->root / r.chart_ref);
                    img.png_bytes.assign(bytes.begin(), bytes.end());
                    x.chart_url = chart_data_url(img);
                }
                ex.push_back(std::move(x));
            }
            return to_request(rationale_inference_prompt(task, ex, query.chart_url), predictor);
        }
        case InferenceMode::TextualZeroShot:
            return to_request(textual_zero_shot_prompt(task, serialize_window(query.sample)), predictor);
        case InferenceMode::TextualCot:
            return to_request(textual_cot_prompt(task, serialize_window(query.sample)), predictor);
        case InferenceMode::VisualZeroShot:
            return to_request(visual_zero_shot_prompt(task, query.chart_url), predictor);
        case InferenceMode::VisualCot:
            return to_request(visual_cot_prompt(task, query.chart_url), predictor);
        case InferenceMode::TextualIcl:
        case InferenceMode::VisualIcl: {
            if (pool == nullptr || pool->samples.empty()) throw ModeError(to_string(v.mode) + " needs labeled exemplars");
            if (!query.temporal) throw StateError("query has no temporal embedding for exemplar selection");
            std::vector<LabeledExemplar> ex;
            for (std::size_t i : pool->nearest(query.temporal->values, params.retrieval.k, query.sample.id)) {
                const Sample& s = pool->samples[i];
                LabeledExemplar x;
                x.label = *s.label;
                if (v.mode == InferenceMode::TextualIcl) {
                    x.table = serialize_window(s);
                } else {
                    x.chart_url = chart_data_url(render_chart(s, params.chart_style));
                }
                ex.push_back(std::move(x));
            }
            if (v.mode == InferenceMode::TextualIcl) {
                return to_request(textual_icl_prompt(task, ex, serialize_window(query.sample)), predictor);
            }
            return to_request(visual_icl_prompt(task, ex, query.chart_url), predictor);
        }
    }
    throw ModeError("unhandled mode");
}

// --------------------------------------------------------------- records

nlohmann::json to_json(const InferenceRecord& r) {
    return {
        {"query_id", r.query_id},
        {"variant", r.variant},
        {"mode", r.mode},
        {"retrieved_ids", r.retrieved_ids},
        {"retrieved_labels", r.retrieved_labels},
        {"summary_text", r.summary_text},
        {"reasoning", r.reasoning},
        {"prediction", r.prediction},
        {"true_label", r.true_label ? nlohmann::json(*r.true_label) : nlohmann::json(nullptr)},
        {"prompt_tokens", r.prompt_tokens},
        {"completion_tokens", r.completion_tokens},
        {"parse_status", to_string(r.parse_status)},
        {"stage", r.stage},
        {"error", r.error},
    };
}

InferenceRecord record_from_json(const nlohmann::json& j) {
    InferenceRecord r;
    r.query_id = j.at("query_id").get<std::string>();
    r.variant = j.value("variant", std::string{});
    r.mode = j.value("mode", std::string{});
    r.retrieved_ids = j.value("retrieved_ids", std::vector<std::string>{});
    r.retrieved_labels = j.value("retrieved_labels", std::vector<int>{});
    r.summary_text = j.value("summary_text", std::string{});
    r.reasoning = j.value("reasoning", std::string{});
    r.prediction = j.at("prediction").get<int>();
    if (j.contains("true_label") && !j.at("true_label").is_null()) r.true_label = j.at("true_label").get<int>();
    r.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
    r.completion_tokens = j.value("completion_tokens", std::int64_t{0});
    r.parse_status = parse_status_from_string(j.at("parse_status").get<std::string>());
    r.stage = j.value("stage", std::string{});
    r.error = j.value("error", std::string{});
    return r;
}

InferenceRecord infer_prepared(const PreparedQuery& query, const RationaleBase* base, const ExemplarPool* pool,
                               const TaskSpec& task, const InferenceParams& params, const InferenceRoles& roles) {
    InferenceRecord rec;
    rec.query_id = query.sample.id;
    rec.variant = params.variant.name;
    rec.mode = to_string(params.variant.mode);
    rec.true_label = query.sample.label;
    rec.prediction = params.fallback_label;
    rec.parse_status = ParseStatus::Failed;
    if (query.summary) {
        rec.summary_text = query.summary->text;
        rec.prompt_tokens += query.summary->prompt_tokens;
        rec.completion_tokens += query.summary->completion_tokens;
    }
    if (!query.failed_stage.empty()) {
        rec.stage = query.failed_stage;
        rec.error = query.error;
        rec.reasoning = "";
        return rec;
    }

    std::string stage = "retrieval";
    try {
        if (uses_rationale_base(params.variant.mode)) {
            if (base == nullptr) throw StateError("rationale-grounded mode needs a rationale base");
            RetrievalParams rp = params.retrieval;
            rp.mode = params.variant.retrieval;
            rec.retrieval = hybrid_top_k(query.sample.id, *query.temporal, *query.semantic, *base, rp);
            for (const auto& e : rec.retrieval->entries) {
                rec.retrieved_ids.push_back(e.sample_id);
                rec.retrieved_labels.push_back(base->rationales[e.index].label);
            }
        }
        stage = "prompt";
        const auto request = build_inference_prompt(query, rec.retrieval ? &*rec.retrieval : nullptr, base, pool, task,
                                                    params, roles.predictor);
        rec.prompt_review = review_text({request.system_text, request.user_parts});
        stage = "predict";
        if (roles.predictor.backend == nullptr) throw ConfigError("predictor role has no backend");
        const auto reply = with_stage_retry([&] { return roles.predictor.backend->chat(request); });
        rec.prompt_tokens += reply.prompt_tokens;
        rec.completion_tokens += reply.completion_tokens;
        stage = "parse";
        const auto parsed = parse_prediction(reply.text, task, params.fallback_label);
        rec.reasoning = parsed.reasoning;
        rec.prediction = parsed.label;
        rec.parse_status = parsed.status;
        if (parsed.status == ParseStatus::Failed) rec.stage = "parse";
    } catch (const std::exception& e) {
        rec.stage = stage;
        rec.error = e.what();
        rec.prediction = params.fallback_label;
        rec.parse_status = ParseStatus::Failed;
    }
    return rec;
}

InferenceRecord infer(const Sample& query, const RationaleBase* base, const ExemplarPool* pool, const TaskSpec& task,
                      const InferenceParams& params, const InferenceRoles& roles) {
    const auto prepared = prepare_query(query, task, params.variant.mode, roles, params.chart_style);
    return infer_prepared(prepared, base, pool, task, params, roles);
}

std::vector<InferenceRecord> run_queries(const std::vector<PreparedQuery>& queries, const RationaleBase* base,
                                         const ExemplarPool* pool, const TaskSpec& task, const InferenceParams& params,
                                         const InferenceRoles& roles, const RunOptions& options,
                                         const std::filesystem::path& run_dir, const nlohmann::json& manifest_extra) {
    std::filesystem::create_directories(run_dir);
    std::vector<InferenceRecord> records(queries.size());
    std::vector<char> done(queries.size(), 0);
    bool cancelled = false;
    try {
        parallel_for(queries.size(), options.jobs, [&](std::size_t i) {
            if (options.cancel && options.cancel->load()) throw Error("inference cancelled");
            records[i] = infer_prepared(queries[i], base, pool, task, params, roles);
            done[i] = 1;
        });
    } catch (const Error&) {
        if (!(options.cancel && options.cancel->load())) throw;
        cancelled = true;
    }

    std::string lines;
    std::string audit;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!done[i]) continue;
        const auto& r = records[i];
        lines += to_json(r).dump() + "\n";
        if (r.retrieval) audit += audit_entry(*r.retrieval).dump() + "\n";
        if (options.audit && !r.prompt_review.empty()) {
            std::filesystem::create_directories(run_dir / "prompts");
            write_file_atomic(run_dir / "prompts" / (r.query_id + ".txt"), r.prompt_review);
        }
        if (options.save_charts && !queries[i].chart.png_bytes.empty()) {
            save_chart(queries[i].chart, run_dir / "charts");
        }
    }
    write_file_atomic(run_dir / "records", lines);
    if (uses_rationale_base(params.variant.mode)) write_file_atomic(run_dir / "retrieval.jsonl", audit);

    nlohmann::json manifest = manifest_extra.is_object() ? manifest_extra : nlohmann::json::object();
    manifest["variant"] = params.variant.name;
    manifest["mode"] = to_string(params.variant.mode);
    manifest["include_chart_refs"] = params.variant.flags.include_chart_refs;
    manifest["include_labels"] = params.variant.flags.include_labels;
    manifest["retrieval_mode"] = to_string(params.variant.retrieval);
    manifest["K"] = params.retrieval.k;
    manifest["lambda"] = params.retrieval.lambda;
    manifest["seed"] = params.retrieval.seed;
    manifest["allow_self_match"] = params.retrieval.allow_self_match;
    manifest["fallback_label"] = params.fallback_label;
    manifest["task"] = task;
    manifest["n_queries"] = queries.size();
    manifest["complete"] = !cancelled;
    if (base != nullptr) {
        manifest["base_digest"] = base->manifest.content_digest;
        manifest["base_dir"] = base->root.string();
    }
    write_file_atomic(run_dir / "manifest", manifest.dump(2) + "\n");
    if (cancelled) throw Error("inference cancelled; partial records written to " + run_dir.string());
    return records;
}

std::vector<InferenceRecord> load_records(const std::filesystem::path& run_dir) {
    std::ifstream in(run_dir / "records");
    if (!in) throw StateError("no records in " + run_dir.string());
    std::vector<InferenceRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out.push_back(record_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

}  // namespace rationalets
