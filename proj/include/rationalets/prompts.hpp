#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rationalets/backend.hpp"
#include "rationalets/data.hpp"
#include "rationalets/task.hpp"

namespace rationalets {

// The nine prompt templates. System and user texts use `{slot}`
// placeholders; paragraphs are separated by a blank line.
enum class PromptId {
    RationaleGeneration = 1,
    ChartSummary = 2,
    RationaleInference = 3,
    TextualZeroShot = 4,
    TextualIcl = 5,
    TextualCot = 6,
    VisualZeroShot = 7,
    VisualIcl = 8,
    VisualCot = 9,
};

struct PromptTemplate {
    std::string system;
    std::string user;
};

const PromptTemplate& prompt_template(PromptId id);

// Substitutes every `{name}`; throws FormatError on an unknown or unclosed slot.
std::string render_template(const std::string& tpl, const std::map<std::string, std::string>& slots);

// Task-derived slots shared by all templates.
std::map<std::string, std::string> task_slots(const TaskSpec& task);

// A prompt before it is bound to a model: system text plus ordered user parts.
struct PromptText {
    std::string system;
    std::vector<ContentPart> user_parts;
};

// System text, then user parts joined by '\n' with images shown as "<image>".
std::string review_text(const PromptText& prompt);

// Fixed-width table: header row ("timestamp" + variable names), one row per
// time step, values with 4 significant digits, columns right-aligned and
// separated by two spaces.
std::string serialize_window(const Sample& sample);

struct RationaleExemplar {
    std::string text;                      // canonical bullet rendering
    std::optional<std::string> chart_url;  // attached after the block when set
    std::optional<int> label;              // "Outcome: <meaning>" line when set
};

struct LabeledExemplar {
    std::optional<std::string> table;      // textual ICL
    std::optional<std::string> chart_url;  // visual ICL
    int label = 0;
};

PromptText rationale_generation_prompt(const TaskSpec& task, int label, const std::string& chart_url);
PromptText chart_summary_prompt(const TaskSpec& task, const std::string& chart_url);
PromptText rationale_inference_prompt(const TaskSpec& task, const std::vector<RationaleExemplar>& rationales,
                                      const std::string& query_chart_url);
PromptText textual_zero_shot_prompt(const TaskSpec& task, const std::string& table);
PromptText textual_cot_prompt(const TaskSpec& task, const std::string& table);
PromptText textual_icl_prompt(const TaskSpec& task, const std::vector<LabeledExemplar>& examples,
                              const std::string& table);
PromptText visual_zero_shot_prompt(const TaskSpec& task, const std::string& chart_url);
PromptText visual_cot_prompt(const TaskSpec& task, const std::string& chart_url);
PromptText visual_icl_prompt(const TaskSpec& task, const std::vector<LabeledExemplar>& examples,
                             const std::string& chart_url);

}  // namespace rationalets
