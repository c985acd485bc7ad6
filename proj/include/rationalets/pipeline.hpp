#pragma once

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rationalets/eval.hpp"

namespace rationalets {

struct RoleConfig {
    std::string backend = "default";  // key into RunConfig::backends
    std::string model;
    double temperature = 0.0;
    int max_tokens = 1024;
};

// Everything a command needs. Loaded from a JSON file; CLI flags override.
struct RunConfig {
    TaskSpec task = traffic_task();
    std::filesystem::path data_path;
    std::optional<ColumnSchema> schema;  // defaults to the task's source layout
    std::size_t stride = 0;              // 0 = task default
    double split_ratio = 0.8;

    std::filesystem::path samples_dir = "work/samples";
    std::filesystem::path base_dir = "work/base";
    std::filesystem::path run_dir = "work/run";
    std::filesystem::path cache_dir;     // per-backend subdirectories when set

    std::map<std::string, BackendConfig> backends{{"default", BackendConfig{}}};  // mock unless configured
    RoleConfig generator{"default", "gpt-5", 0.7, 1024};
    RoleConfig summarizer{"default", "gpt-4o-mini", 0.0, 512};
    RoleConfig predictor{"default", "gpt-4o-mini", 0.0, 1024};
    std::string embedder = "default";
    TemporalEncoderKind temporal_encoder = TemporalEncoderKind::BuiltinStats;
    std::string encoder_backend = "encoder";  // base_url of the /embed service

    std::size_t k = 5;
    double lambda = 0.8;
    InferenceMode mode = InferenceMode::RationaleGrounded;
    std::string variant = "full";
    std::optional<RetrievalMode> retrieval;  // overrides the variant's retrieval
    std::uint64_t seed = 0;
    bool allow_self_match = false;
    std::optional<int> fallback_label;  // default: most frequent base class
    bool audit = false;
    int jobs = 1;
    int max_regen = 2;
    std::optional<std::size_t> max_queries;
    SweepGrid sweep{{1, 3, 5, 7, 10}, {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}};
    ChartStyle chart_style;

    Variant resolved_variant() const;
    void validate() const;  // throws ConfigError / ParameterError
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

// Scripted replies for an offline mock backend: a bulleted rationale for
// the generator, a summary for the summarizer, and a JSON answer whose
// label is derived from the request digest for the predictor.
std::vector<MockRule> default_mock_rules(const TaskSpec& task);

// Owns one Backend per configured name and binds them to roles.
class BackendSet {
public:
    explicit BackendSet(const RunConfig& cfg);
    Backend& get(const std::string& name);
    InferenceRoles inference_roles(const RunConfig& cfg);
    ChatRole generator_role(const RunConfig& cfg);

private:
    std::map<std::string, std::unique_ptr<Backend>> backends_;
};

// Most frequent label among `samples`; ties go to the smaller label.
int majority_label(const std::vector<Sample>& samples, std::size_t num_classes);

// Text table of class counts and percentages for each split.
std::string distribution_table(const TaskSpec& task, const std::vector<std::pair<std::string, std::vector<Sample>>>& splits);

// Commands return the process exit code and print progress to `out`.
int cmd_ingest(const RunConfig& cfg, std::ostream& out);
int cmd_build_base(const RunConfig& cfg, std::ostream& out, const std::atomic<bool>* cancel = nullptr);
int cmd_infer(const RunConfig& cfg, std::ostream& out, const std::atomic<bool>* cancel = nullptr);
int cmd_eval(const std::filesystem::path& run_dir, std::ostream& out);
int cmd_sweep(const RunConfig& cfg, std::ostream& out, const std::atomic<bool>* cancel = nullptr);
// Concatenates the report.jsonl files of `dirs` into one table at `out_dir`.
int cmd_report(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out_dir, std::ostream& out);

}  // namespace rationalets
