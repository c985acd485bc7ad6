#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rationalets/backend.hpp"
#include "rationalets/chart.hpp"
#include "rationalets/data.hpp"
#include "rationalets/encoder.hpp"
#include "rationalets/prompts.hpp"
#include "rationalets/task.hpp"

namespace rationalets {

struct ReasoningPath {
    std::string observation;
    std::string implication;

    friend bool operator==(const ReasoningPath&, const ReasoningPath&) = default;
};

struct ParsedRationale {
    std::vector<ReasoningPath> paths;
    std::vector<std::string> warnings;
};

// Bullets start with '-', '*', '•' or "1." / "1)" followed by whitespace;
// indented non-bullet lines continue the previous bullet. Each bullet is
// split at the first "->" or "→". Throws FormatError when no bullet is found.
ParsedRationale parse_rationale(std::string_view text);

// "- observation -> implication" per line.
std::string render_paths(const std::vector<ReasoningPath>& paths);

struct LeakViolation {
    enum class Kind { ClassMeaning, LabelToken, TargetOutcome };
    Kind kind;
    std::size_t offset;
    std::size_t length;
    std::string match;
};

// Case-insensitive scan for (a) any class-meaning phrase, (b) literal label
// tokens such as "label 2" or "prediction: 0", and (c) sentences that name
// the target variable together with a class keyword and a forward-looking
// cue ("will", "next", "expected", ...). Returns matches ordered by offset.
std::vector<LeakViolation> validate_no_leak(std::string_view text, const TaskSpec& task);

struct Rationale {
    std::string sample_id;
    int label = 0;
    std::vector<ReasoningPath> paths;
    std::string raw_text;
    bool leak_warning = false;   // still leaky after the regeneration budget
    bool format_warning = false; // no bullets after the budget; raw text kept as one path
    int attempts = 1;
    std::string chart_ref;       // relative path of the stored chart (ablation A.1)
    std::string label_text;      // class meaning (ablation A.2); never shown by default

    std::string text() const { return render_paths(paths); }

    friend bool operator==(const Rationale&, const Rationale&) = default;
};

// Row-major float32 matrix of embeddings.
struct EmbeddingTable {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<float> data;

    std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
    void append(const std::vector<double>& v);

    friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

struct BaseManifest {
    std::string task_name;
    std::string temporal_encoder_id;
    std::string semantic_encoder_id;
    std::string generator_model;
    std::string created_at;
    std::string content_digest;  // over rationales + H_b + H_s bytes

    friend bool operator==(const BaseManifest&, const BaseManifest&) = default;
};

struct RationaleBase {
    BaseManifest manifest;
    std::vector<Rationale> rationales;
    EmbeddingTable temporal;  // H_b
    EmbeddingTable semantic;  // H_s
    std::filesystem::path root;  // directory the base was saved to / loaded from

    std::size_t size() const noexcept { return rationales.size(); }
    std::vector<std::string> ids() const;
    void validate() const;  // throws ConsistencyError on misalignment

    friend bool operator==(const RationaleBase& a, const RationaleBase& b) {
        return a.manifest == b.manifest && a.rationales == b.rationales && a.temporal == b.temporal &&
               a.semantic == b.semantic;
    }
};

// Layout: manifest, rationales (one JSON record per line), H_b.bin, H_s.bin
// (row-major little-endian float32), charts/<sample_id>.png.
void save_base(const RationaleBase& base, const std::filesystem::path& dir);
RationaleBase load_base(const std::filesystem::path& dir);
std::string base_content_digest(const RationaleBase& base);

struct ChatRole {
    Backend* backend = nullptr;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 1024;
};

ChatRequest to_request(const PromptText& prompt, const ChatRole& role);

// Prompt for the generator role; throws TaskError when the sample has no label.
ChatRequest build_rationale_prompt(const Sample& sample, const TaskSpec& task, const ChatRole& role,
                                   const ChartImage& chart);

struct BuildPolicy {
    int max_regen = 2;
    int jobs = 1;
    std::string created_at;
    ChartStyle chart_style;
    TemporalEncoderKind temporal_encoder = TemporalEncoderKind::BuiltinStats;
    Backend* temporal_remote = nullptr;
    const std::atomic<bool>* cancel = nullptr;
};

// Renders each sample, prompts the generator, parses and leak-checks the
// reply (regenerating up to max_regen times), embeds both spaces and
// persists the base to `dir`. Progress is checkpointed per sample, so an
// aborted build resumes where it stopped.
RationaleBase build_base(const std::vector<Sample>& base_samples, const TaskSpec& task, const ChatRole& generator,
                         Backend& embedder, const BuildPolicy& policy, const std::filesystem::path& dir);

}  // namespace rationalets
