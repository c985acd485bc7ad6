#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rationalets/inference.hpp"

namespace rationalets {

// counts[t * n + p]: true class t predicted as p.
struct ConfusionMatrix {
    std::size_t n = 0;
    std::vector<std::int64_t> counts;

    explicit ConfusionMatrix(std::size_t classes = 0) : n(classes), counts(classes * classes, 0) {}
    std::int64_t& at(std::size_t t, std::size_t p) { return counts[t * n + p]; }
    std::int64_t at(std::size_t t, std::size_t p) const { return counts[t * n + p]; }
    void add(int truth, int pred);  // throws ParameterError on an out-of-range label
    std::int64_t total() const;
};

// Unweighted mean of per-class 2TP / (2TP + FP + FN), times 100. A class
// that is neither present nor predicted scores 0.
double macro_f1(const ConfusionMatrix& cm);

// Mann-Whitney AUC of `scores` separating positives from negatives, ties
// counted as half. Throws ParameterError when either side is empty.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

// One-vs-rest AUC with one-hot scores from hard predictions, macro-averaged
// over classes that have both positives and negatives, times 100. Skipped
// classes are reported through `warnings`. Throws ParameterError when fewer
// than two classes remain.
double auc_ovr(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t num_classes,
               std::vector<std::string>* warnings = nullptr);

struct EvalReport {
    std::string variant;
    std::string mode;
    std::size_t k = 0;
    double lambda = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    std::optional<double> hit_rate;  // rationale-grounded modes only
    std::size_t n_queries = 0;
    std::size_t n_scored = 0;          // parse ok or recovered
    std::size_t n_parse_failures = 0;  // scored with the fallback label
    int fallback_label = 0;
    double avg_prompt_tokens = 0.0;
    double avg_completion_tokens = 0.0;
    ConfusionMatrix confusion;
    std::vector<std::string> warnings;
};

// Every record must carry its true label. Failed parses enter the metrics
// with the fallback label they were assigned.
EvalReport evaluate(const std::vector<InferenceRecord>& records, const TaskSpec& task, std::size_t k, double lambda,
                    int fallback_label);

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

// Aligned text table, one row per report.
std::string render_report_table(const std::vector<EvalReport>& reports);

struct SweepGrid {
    std::vector<std::size_t> k_values;
    std::vector<double> lambda_values;
};

// "<K>_<lambda>" with the shortest round-trip lambda text.
std::string sweep_cell_name(std::size_t k, double lambda);

// One inference + evaluation run per (K, lambda) cell under
// out_dir/sweep/<K>_<lambda>/. Query preparation (chart, summary,
// embeddings) is done once and shared. Writes report.txt, report.jsonl,
// plot_vs_k.tsv and plot_vs_lambda.tsv into out_dir.
std::vector<EvalReport> sweep(const RationaleBase& base, const std::vector<Sample>& queries, const TaskSpec& task,
                              const SweepGrid& grid, const InferenceParams& params, const InferenceRoles& roles,
                              const RunOptions& options, const std::filesystem::path& out_dir,
                              const nlohmann::json& manifest_extra = {});

void write_reports(const std::vector<EvalReport>& reports, const std::filesystem::path& out_dir);

}  // namespace rationalets
