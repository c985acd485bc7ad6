#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rationalets/chart.hpp"
#include "rationalets/prompts.hpp"
#include "rationalets/rationale_base.hpp"
#include "rationalets/retrieval.hpp"

namespace rationalets {

enum class InferenceMode {
    RationaleGrounded,
    TextualZeroShot,
    TextualCot,
    TextualIcl,
    VisualZeroShot,
    VisualCot,
    VisualIcl,
};

std::string to_string(InferenceMode mode);
InferenceMode inference_mode_from_string(const std::string& s);  // throws ModeError

bool uses_rationale_base(InferenceMode mode) noexcept;
bool is_icl(InferenceMode mode) noexcept;

struct AblationFlags {
    bool include_chart_refs = false;  // attach each exemplar's chart
    bool include_labels = false;      // append "Outcome: <meaning>" to each exemplar
};

// A named point in the ablation grid. "full" is the unablated pipeline;
// A.1-A.3 toggle exemplar charts/labels; B.1 drops the data-centric term
// (semantic-only), B.2 drops the semantic term (data-only), B.3 retrieves
// at random. Baseline modes use the mode name as the variant.
struct Variant {
    std::string name;
    InferenceMode mode = InferenceMode::RationaleGrounded;
    AblationFlags flags;
    RetrievalMode retrieval = RetrievalMode::Hybrid;
};

Variant variant_from_name(const std::string& name);  // throws ModeError
std::string variant_name(InferenceMode mode, const AblationFlags& flags, RetrievalMode retrieval);
const std::vector<std::string>& ablation_variant_names();  // A.1..A.3, B.1..B.3

enum class ParseStatus { Ok, Recovered, Failed };
std::string to_string(ParseStatus s);
ParseStatus parse_status_from_string(const std::string& s);

struct ParsedPrediction {
    std::string reasoning;
    int label = 0;
    ParseStatus status = ParseStatus::Failed;
};

// Strict JSON object with "reasoning" and "prediction" keys first; then code
// fences are stripped, the outermost {...} substring is tried, and finally
// the two keys are pulled out by pattern. The label must be in the task's
// label set. On failure the raw reply becomes the reasoning and
// `fallback_label` the prediction.
ParsedPrediction parse_prediction(const std::string& reply, const TaskSpec& task, int fallback_label);

struct InferenceRoles {
    ChatRole summarizer;
    ChatRole predictor;
    Backend* embedder = nullptr;
    TemporalEncoderKind temporal_encoder = TemporalEncoderKind::BuiltinStats;
    Backend* temporal_remote = nullptr;
};

struct Summary {
    std::string query_id;
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

// Prompt 2 on the query chart; throws SummaryError on an empty reply.
Summary summarize(const std::string& query_id, const ChartImage& chart, const TaskSpec& task, const ChatRole& role);

struct InferenceParams {
    Variant variant;
    RetrievalParams retrieval;  // k also sizes the ICL baselines
    int fallback_label = 0;
    ChartStyle chart_style;
};

// Stages that depend only on the query: shared by every sweep cell.
struct PreparedQuery {
    Sample sample;
    ChartImage chart;
    std::string chart_url;
    std::optional<Summary> summary;
    std::optional<EmbeddingVector> temporal;
    std::optional<EmbeddingVector> semantic;
    std::string failed_stage;  // empty when every stage succeeded
    std::string error;
};

// Renders the chart; for rationale-grounded modes also summarizes and
// embeds. Stage errors are captured, not thrown.
PreparedQuery prepare_query(const Sample& query, const TaskSpec& task, InferenceMode mode, const InferenceRoles& roles,
                            const ChartStyle& style);

// Labeled examples for the ICL baselines, drawn from the base split.
struct ExemplarPool {
    std::vector<Sample> samples;
    EmbeddingTable temporal;  // builtin encoder rows, aligned with samples

    static ExemplarPool from_samples(std::vector<Sample> samples);
    std::vector<std::size_t> nearest(const std::vector<double>& query_temporal, std::size_t k,
                                     const std::string& exclude_id) const;
};

ChatRequest build_inference_prompt(const PreparedQuery& query, const RetrievalSet* retrieved, const RationaleBase* base,
                                   const ExemplarPool* pool, const TaskSpec& task, const InferenceParams& params,
                                   const ChatRole& predictor);

struct InferenceRecord {
    std::string query_id;
    std::string variant;
    std::string mode;
    std::vector<std::string> retrieved_ids;
    std::vector<int> retrieved_labels;
    std::string summary_text;
    std::string reasoning;
    int prediction = 0;
    std::optional<int> true_label;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    ParseStatus parse_status = ParseStatus::Failed;
    std::string stage;  // stage that failed, empty otherwise
    std::string error;

    // Not serialized: inputs kept for audit output.
    std::string prompt_review;
    std::optional<RetrievalSet> retrieval;
};

nlohmann::json to_json(const InferenceRecord& r);
InferenceRecord record_from_json(const nlohmann::json& j);

// Retrieval (for rationale-grounded modes), prompt, chat, parse. Errors in
// any stage yield a failed record tagged with the stage.
InferenceRecord infer_prepared(const PreparedQuery& query, const RationaleBase* base, const ExemplarPool* pool,
                               const TaskSpec& task, const InferenceParams& params, const InferenceRoles& roles);

InferenceRecord infer(const Sample& query, const RationaleBase* base, const ExemplarPool* pool, const TaskSpec& task,
                      const InferenceParams& params, const InferenceRoles& roles);

struct RunOptions {
    int jobs = 1;
    bool audit = false;
    bool save_charts = true;
    const std::atomic<bool>* cancel = nullptr;
};

// Run directory layout: manifest, records, retrieval.jsonl (rationale
// modes only), prompts/<query_id>.txt when auditing, charts/<query_id>.png.
std::vector<InferenceRecord> run_queries(const std::vector<PreparedQuery>& queries, const RationaleBase* base,
                                         const ExemplarPool* pool, const TaskSpec& task, const InferenceParams& params,
                                         const InferenceRoles& roles, const RunOptions& options,
                                         const std::filesystem::path& run_dir, const nlohmann::json& manifest_extra);

std::vector<PreparedQuery> prepare_queries(const std::vector<Sample>& queries, const TaskSpec& task,
                                           InferenceMode mode, const InferenceRoles& roles, const ChartStyle& style,
                                           int jobs);

std::vector<InferenceRecord> load_records(const std::filesystem::path& run_dir);

}  // namespace rationalets
