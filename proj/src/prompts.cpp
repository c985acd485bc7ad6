#include "rationalets/prompts.hpp"

#include <algorithm>
#include <cstdio>

#include "rationalets/error.hpp"

namespace rationalets {

namespace {

// Marks an image position inside rendered user text before it is split into parts.
constexpr std::string_view kImageMarker = "\x1eIMAGE\x1e";

const char* const kJsonAnswer =
    "Provide your answer in a valid JSON format with 'reasoning' and 'prediction' keys.";

const PromptTemplate kTemplates[] = {
    // 1. abductive rationale generation
    {"You are a senior {analyst_domain} analyst. Given the actual outcome, your task is to generate a concise, "
     "'gold-standard' causal reasoning path that logically explains this outcome based on the provided {domain} "
     "chart. This path will be used for a retrieval system. **Do not mention the actual outcome or the final "
     "prediction in your reasoning text.**",
     "The actual outcome for the next {future_phrase} was: **{true_label_meaning}**.\n\n"
     "Please provide the ideal reasoning path that explains this outcome based on the attached {history_phrase} "
     "data chart.\n\n"
     "**Your Task**\n\n"
     "Provide a bulleted list of key causal factors. Each bullet point must follow the format: "
     "'Observation -> Implication'. Focus on describing the *dynamics* and *patterns*."},
    // 2. chart summary
    {"You are a concise {domain} data analyst. Your task is to look at a {history_phrase} {domain} chart and "
     "provide a brief, factual summary of the most prominent patterns.",
     "Analyze the attached {history_phrase} {domain} data chart. Provide a one-paragraph summary describing the key "
     "trends you observe in variables. Be factual and objective."},
    // 3. rationale-grounded in-context inference
    {"You are a world-class {domain} expert.\n\n"
     "You will be given a new {history_phrase} data chart and several relevant historical reasoning paths.\n\n"
     "Your task is to first study the historical examples, then analyze the new chart, and finally analyze the "
     "{target_phrase} trend for the next {future_phrase}.",
     "Here are some relevant historical reasoning paths:\n\n"
     "{examples}\n\n"
     "**Your Task**\n\n"
     "Now, analyze the **new attached chart**. Based on your analysis of this new chart AND the patterns learned "
     "from the historical examples, predict whether the {target_detail} in the next {future_phrase} will "
     "{reasoning_task}. Categorize your prediction as {label_options}.\n\n"
     "{json_answer} Your 'reasoning' should be a step-by-step analysis that explicitly references both the new "
     "chart's data and the logic from the provided examples."},
    // 4. textual zero-shot
    {"You are a world-class {domain} expert.\n\n"
     "You will be given {history_phrase} {data_domain} data.\n\n"
     "Your task is to analyze the data and predict the {target_phrase} trend for the next {future_phrase}.",
     "**Time-Series Data**\n\n"
     "Here is the {history_phrase} data for a specific location:\n\n"
     "{data}\n\n"
     "**Your Task**\n\n"
     "Analyze the provided data. Predict the change in {target_phrase} for the next {future_phrase} compared to "
     "{reference_phrase} in the data. Categorize your prediction as {label_options} .\n\n"
     "{json_answer} Your 'reasoning' should be a step-by-step analysis of the data."},
    // 5. textual ICL
    {"You are a world-class {domain} expert.\n\n"
     "You will be shown several examples of {history_phrase} data, each paired with its correct label indicating "
     "the {target_phrase} change for the next {future_phrase}. Your task is to learn the patterns from these "
     "examples and then predict the change for new, unseen data.",
     "Analyze the following examples. Each example consists of time-series data and its corresponding label for "
     "the {target_phrase} change.\n\n"
     "{examples}\n\n"
     "**Your Task**\n\n"
     "Now, analyze the **new data** below. Based on the patterns you observed in the examples, predict the change "
     "in {target_phrase} for the next {future_phrase}. Categorize your prediction as {label_options}.\n\n"
     "**New Data**\n\n"
     "{data}\n\n"
     "{json_answer} Your reasoning should be a step-by-step analysis of the new data, drawing parallels to the "
     "provided examples where applicable."},
    // 6. textual CoT
    {"You are a world-class {domain} expert.\n\n"
     "You will be given {history_phrase} {domain} data. Your task is to analyze the data and predict the "
     "{target_phrase} for the next {future_phrase}.",
     "**Time-Series Data**\n\n"
     "Here is the {history_phrase} data for a specific location:\n\n"
     "{data}\n\n"
     "**Your Task**\n\n"
     "Analyze the provided data. Predict the change in {target_phrase} for the next {future_phrase} compared to "
     "{reference_phrase} in the data. Categorize your prediction as {label_options}.\n\n"
     "Please provide the ideal reasoning path that explains your prediction based on the provided data, following "
     "the format: `Observation -> Implication`.\n\n"
     "{json_answer} Your 'reasoning' should be a step-by-step analysis of the data."},
    // 7. visual zero-shot
    {"You are a world-class {domain} expert.\n\n"
     "You will be given {history_phrase} {data_domain} data chart.\n\n"
     "Your task is to analyze the chart and predict the {target_phrase} trend for the next {future_phrase}.",
     "**Your Task**\n\n"
     "Analyze the **Attached Chart**. Predict the change in {target_phrase} for the next {future_phrase} compared "
     "to {reference_phrase} in the data. Categorize your prediction as {label_options} .\n\n"
     "{json_answer} Your 'reasoning' should be a step-by-step analysis of the chart."},
    // 8. visual ICL
    {"You are a world-class {domain} expert.\n\n"
     "You will be shown several examples of {history_phrase} data chart, each paired with its correct label "
     "indicating the {target_phrase} change for the next {future_phrase}. Your task is to learn the patterns from "
     "these examples and then predict the change for new, unseen chart.",
     "Analyze the following examples. Each example consists of a chart and its corresponding label for the "
     "{target_phrase} change.\n\n"
     "{examples}\n\n"
     "**Your Task**\n\n"
     "Now, analyze the **Attached Chart**. Based on the patterns you observed in the examples, predict the change "
     "in {target_phrase} for the next {future_phrase}. Categorize your prediction as {label_options}.\n\n"
     "{json_answer} Your reasoning should be a step-by-step analysis of the new chart, drawing parallels to the "
     "provided examples where applicable."},
    // 9. visual CoT
    {"You are a world-class {domain} expert.\n\n"
     "You will be given {history_phrase} {domain} data chart. Your task is to analyze the chart and predict the "
     "{target_phrase} for the next {future_phrase}.",
     "**Your Task**\n\n"
     "Analyze the **Attached Chart**. Predict the change in {target_phrase} for the next {future_phrase} compared "
     "to {reference_phrase} in the chart. Categorize your prediction as {label_options}.\n\n"
     "Please provide the ideal reasoning path that explains your prediction based on the attached chart, following "
     "the format: 'Observation -> Implication'.\n\n"
     "{json_answer} Your 'reasoning' should be a step-by-step analysis of the chart."},
};

std::string trim_newlines(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && s[b] == '\n') ++b;
    while (e > b && s[e - 1] == '\n') --e;
    return std::string(s.substr(b, e - b));
}

// Splits rendered user text at image markers; `images` supplies the URLs in order.
PromptText assemble(std::string system, const std::string& user, const std::vector<std::string>& images,
                    const std::optional<std::string>& trailing_image) {
    PromptText p;
    p.system = std::move(system);
    std::size_t pos = 0;
    std::size_t img = 0;
    for (;;) {
        const auto hit = user.find(kImageMarker, pos);
        const auto segment = trim_newlines(std::string_view(user).substr(pos, hit == std::string::npos ? std::string::npos : hit - pos));
        if (!segment.empty()) p.user_parts.push_back(ContentPart::text(segment));
        if (hit == std::string::npos) break;
        if (img >= images.size()) throw FormatError("more image markers than images");
        p.user_parts.push_back(ContentPart::image(images[img++]));
        pos = hit + kImageMarker.size();
    }
    if (trailing_image) p.user_parts.push_back(ContentPart::image(*trailing_image));
    return p;
}

PromptText render(PromptId id, std::map<std::string, std::string> slots, const std::vector<std::string>& images,
                  const std::optional<std::string>& trailing_image) {
    const auto& tpl = prompt_template(id);
    return assemble(render_template(tpl.system, slots), render_template(tpl.user, slots), images, trailing_image);
}

std::string label_line(const TaskSpec& task, int label) {
    return "Label: " + std::to_string(label) + " (" + task.class_info(label).prompt_text + ")";
}

}  // namespace

const PromptTemplate& prompt_template(PromptId id) {
    const auto i = static_cast<int>(id);
    if (i < 1 || i > 9) throw FormatError("unknown prompt id " + std::to_string(i));
    return kTemplates[i - 1];
}

std::string render_template(const std::string& tpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tpl.size() * 2);
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const auto open = tpl.find('{', pos);
        if (open == std::string::npos) {
            out.append(tpl, pos, std::string::npos);
            break;
        }
        out.append(tpl, pos, open - pos);
        const auto close = tpl.find('}', open);
        if (close == std::string::npos) throw FormatError("unclosed template slot");
        const std::string name = tpl.substr(open + 1, close - open - 1);
        const auto it = slots.find(name);
        if (it == slots.end()) throw FormatError("template slot '{" + name + "}' has no value");
        out += it->second;
        pos = close + 1;
    }
    return out;
}

std::map<std::string, std::string> task_slots(const TaskSpec& task) {
    const auto& p = task.prompt;
    return {
        {"domain", p.domain},
        {"analyst_domain", p.analyst_domain},
        {"data_domain", p.data_domain},
        {"history_phrase", p.history_phrase},
        {"future_phrase", p.future_phrase},
        {"target_phrase", p.target_phrase},
        {"target_detail", p.target_detail},
        {"reasoning_task", p.reasoning_task},
        {"reference_phrase", p.reference_phrase},
        {"label_options", task.label_options()},
        {"json_answer", kJsonAnswer},
    };
}

std::string review_text(const PromptText& prompt) {
    std::string out = "SYSTEM:\n" + prompt.system + "\n\nUSER:\n";
    for (std::size_t i = 0; i < prompt.user_parts.size(); ++i) {
        if (i > 0) out += '\n';
        const auto& part = prompt.user_parts[i];
        out += part.kind == ContentPart::Kind::Text ? part.value : "<image>";
    }
    out += '\n';
    return out;
}

std::string serialize_window(const Sample& sample) {
    const Matrix& w = sample.window;
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header{"timestamp"};
    for (std::size_t c = 0; c < w.cols(); ++c) {
        header.push_back(c < sample.variable_names.size() ? sample.variable_names[c] : "var" + std::to_string(c));
    }
    cells.push_back(header);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        std::vector<std::string> row;
        if (r < sample.timestamps.size()) {
            auto ts = format_iso8601(sample.timestamps[r]);
            ts[10] = ' ';
            row.push_back(ts.substr(0, 16));
        } else {
            row.push_back(std::to_string(r));
        }
        for (std::size_t c = 0; c < w.cols(); ++c) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4g", w(r, c));
            row.emplace_back(buf);
        }
        cells.push_back(std::move(row));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        if (r > 0) out += '\n';
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            if (c > 0) out += "  ";
            out.append(width[c] - cells[r][c].size(), ' ');
            out += cells[r][c];
        }
    }
    return out;
}

PromptText rationale_generation_prompt(const TaskSpec& task, int label, const std::string& chart_url) {
    auto slots = task_slots(task);
    slots["true_label_meaning"] = task.class_info(label).meaning;
    return render(PromptId::RationaleGeneration, std::move(slots), {}, chart_url);
}

PromptText chart_summary_prompt(const TaskSpec& task, const std::string& chart_url) {
    return render(PromptId::ChartSummary, task_slots(task), {}, chart_url);
}

PromptText rationale_inference_prompt(const TaskSpec& task, const std::vector<RationaleExemplar>& rationales,
                                      const std::string& query_chart_url) {
    std::string examples;
    std::vector<std::string> images;
    for (std::size_t i = 0; i < rationales.size(); ++i) {
        const auto& r = rationales[i];
        if (i > 0) examples += "\n\n";
        examples += "Rationale " + std::to_string(i + 1) + ":\n" + r.text;
        if (r.label) examples += "\nOutcome: " + task.class_info(*r.label).meaning;
        if (r.chart_url) {
            examples += kImageMarker;
            images.push_back(*r.chart_url);
        }
    }
    auto slots = task_slots(task);
    slots["examples"] = examples;
    return render(PromptId::RationaleInference, std::move(slots), images, query_chart_url);
}

PromptText textual_zero_shot_prompt(const TaskSpec& task, const std::string& table) {
    auto slots = task_slots(task);
    slots["data"] = table;
    return render(PromptId::TextualZeroShot, std::move(slots), {}, std::nullopt);
}

PromptText textual_cot_prompt(const TaskSpec& task, const std::string& table) {
    auto slots = task_slots(task);
    slots["data"] = table;
    return render(PromptId::TextualCot, std::move(slots), {}, std::nullopt);
}

PromptText textual_icl_prompt(const TaskSpec& task, const std::vector<LabeledExemplar>& examples,
                              const std::string& table) {
    std::string block;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (!examples[i].table) throw ModeError("textual ICL exemplar without data");
        if (i > 0) block += "\n\n";
        block += "Example " + std::to_string(i + 1) + ":\n" + *examples[i].table + "\n" + label_line(task, examples[i].label);
    }
    auto slots = task_slots(task);
    slots["examples"] = block;
    slots["data"] = table;
    return render(PromptId::TextualIcl, std::move(slots), {}, std::nullopt);
}

PromptText visual_zero_shot_prompt(const TaskSpec& task, const std::string& chart_url) {
    return render(PromptId::VisualZeroShot, task_slots(task), {}, chart_url);
}

PromptText visual_cot_prompt(const TaskSpec& task, const std::string& chart_url) {
    return render(PromptId::VisualCot, task_slots(task), {}, chart_url);
}

PromptText visual_icl_prompt(const TaskSpec& task, const std::vector<LabeledExemplar>& examples,
                             const std::string& chart_url) {
    std::string block;
    std::vector<std::string> images;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (!examples[i].chart_url) throw ModeError("visual ICL exemplar without chart");
        if (i > 0) block += "\n\n";
        block += "Example " + std::to_string(i + 1) + ":";
        block += kImageMarker;
        block += label_line(task, examples[i].label);
        images.push_back(*examples[i].chart_url);
    }
    auto slots = task_slots(task);
    slots["examples"] = block;
    return render(PromptId::VisualIcl, std::move(slots), images, chart_url);
}

}  // namespace rationalets
