#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rationalets {

enum class LabelRule {
    ThresholdDelta3Class,   // 0 = decrease beyond delta, 1 = within, 2 = increase beyond delta
    MeanComparisonBinary,   // 1 iff mean(target over horizon) > mean(target over history)
};

enum class DeltaKind {
    Relative,  // delta is a fraction of the last history value (Finance: 0.01)
    Absolute,  // delta is in target units (Traffic: 2)
};

struct ClassInfo {
    std::string meaning;      // outcome text, e.g. "increase by over 1%"
    std::string prompt_text;  // category description used inside prediction prompts
    std::string keyword;      // short directional term used by the leak scanner
};

// Slot values substituted into the prompt templates.
struct PromptSlots {
    std::string domain;             // "traffic"
    std::string analyst_domain;     // "traffic and urban"
    std::string data_domain;        // "traffic and environment"
    std::string history_phrase;     // "12-hour"
    std::string future_phrase;      // "hour"
    std::string target_phrase;      // "Occupancy"
    std::string target_detail;      // "average active power ('Patv')"
    std::string reasoning_task;     // "increase, decrease, or remain stable compared to the last hour"
    std::string reference_phrase;   // "the last hour"
};

struct TaskSpec {
    std::string name;
    std::size_t history_len = 0;
    std::size_t horizon_len = 0;
    std::string target_variable;
    std::vector<std::string> target_aliases;
    LabelRule rule = LabelRule::ThresholdDelta3Class;
    DeltaKind delta_kind = DeltaKind::Relative;
    double delta = 0.0;
    std::vector<ClassInfo> classes;
    PromptSlots prompt;
    // 0 means "use horizon_len".
    std::size_t default_stride = 0;

    std::size_t num_classes() const noexcept { return classes.size(); }
    std::size_t stride() const noexcept { return default_stride == 0 ? horizon_len : default_stride; }

    const ClassInfo& class_info(int label) const;

    // Throws TaskError when the spec is internally inconsistent, or when
    // `variables` is non-empty and does not contain the target.
    void validate(const std::vector<std::string>& variables = {}) const;

    // "0 (a), 1 (b), or 2 (c)" / "0 (a) or 1 (b)".
    std::string label_options() const;
};

TaskSpec finance_task();
TaskSpec traffic_task();
TaskSpec power_task();

// "finance" | "traffic" | "power"; throws TaskError otherwise.
TaskSpec task_preset(std::string_view name);

void to_json(nlohmann::json& j, const TaskSpec& task);
void from_json(const nlohmann::json& j, TaskSpec& task);

}  // namespace rationalets
