#include "rationalets/task.hpp"

#include <algorithm>

#include "rationalets/error.hpp"

namespace rationalets {

const ClassInfo& TaskSpec::class_info(int label) const {
    if (label < 0 || static_cast<std::size_t>(label) >= classes.size()) {
        throw TaskError("task '" + name + "': unknown label " + std::to_string(label));
    }
    return classes[static_cast<std::size_t>(label)];
}

void TaskSpec::validate(const std::vector<std::string>& variables) const {
    if (name.empty()) throw TaskError("task name is empty");
    if (history_len == 0) throw TaskError("task '" + name + "': history_len must be positive");
    if (horizon_len == 0) throw TaskError("task '" + name + "': horizon_len must be positive");
    if (target_variable.empty()) throw TaskError("task '" + name + "': target_variable is empty");
    switch (rule) {
        case LabelRule::ThresholdDelta3Class:
            if (!(delta > 0.0)) throw TaskError("task '" + name + "': delta must be > 0 for the 3-class rule");
            if (classes.size() != 3) throw TaskError("task '" + name + "': 3-class rule needs exactly 3 class meanings");
            break;
        case LabelRule::MeanComparisonBinary:
            if (classes.size() != 2) throw TaskError("task '" + name + "': binary rule needs exactly 2 class meanings");
            break;
    }
    for (const auto& c : classes) {
        if (c.meaning.empty()) throw TaskError("task '" + name + "': empty class meaning");
    }
    if (!variables.empty() &&
        std::find(variables.begin(), variables.end(), target_variable) == variables.end()) {
        throw TaskError("task '" + name + "': target variable '" + target_variable +
                        "' is not among the dataset variables");
    }
}

std::string TaskSpec::label_options() const {
    std::string out;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (i > 0) {
            if (i + 1 == classes.size()) {
                out += classes.size() > 2 ? ", or " : " or ";
            } else {
                out += ", ";
            }
        }
        out += std::to_string(i) + " (" + classes[i].prompt_text + ")";
    }
    return out;
}

TaskSpec finance_task() {
    TaskSpec t;
    t.name = "finance";
    t.history_len = 20;
    t.horizon_len = 1;
    t.target_variable = "S&P 500";
    t.target_aliases = {"S&P", "SP500", "SPX"};
    t.rule = LabelRule::ThresholdDelta3Class;
    t.delta_kind = DeltaKind::Relative;
    t.delta = 0.01;
    t.classes = {
        {"decrease by over 1%", "decrease by more than 1%", "decrease"},
        {"remain stable", "remain neutral (i.e., between -1% and 1%)", "stable"},
        {"increase by over 1%", "increase by more than 1%", "increase"},
    };
    t.prompt = {
        .domain = "finance",
        .analyst_domain = "financial market",
        .data_domain = "financial market",
        .history_phrase = "20-day",
        .future_phrase = "day",
        .target_phrase = "S&P 500",
        .target_detail = "S&P 500 index",
        .reasoning_task = "increase by over 1%, decrease by over 1%, or remain stable compared to the last day",
        .reference_phrase = "the last day",
    };
    t.default_stride = 1;
    return t;
}

TaskSpec traffic_task() {
    TaskSpec t;
    t.name = "traffic";
    t.history_len = 12;
    t.horizon_len = 1;
    t.target_variable = "Occupancy";
    t.rule = LabelRule::ThresholdDelta3Class;
    t.delta_kind = DeltaKind::Absolute;
    t.delta = 2.0;
    t.classes = {
        {"decrease by 2", "decreases by >2", "decrease"},
        {"remain stable", "changes within [-2, 2]", "stable"},
        {"increase by 2", "increases by >2", "increase"},
    };
    t.prompt = {
        .domain = "traffic",
        .analyst_domain = "traffic and urban",
        .data_domain = "traffic and environment",
        .history_phrase = "12-hour",
        .future_phrase = "hour",
        .target_phrase = "Occupancy",
        .target_detail = "Occupancy",
        .reasoning_task = "increase by over 2, decrease by over 2, or remain stable compared to the last hour",
        .reference_phrase = "the last hour",
    };
    t.default_stride = 6;
    return t;
}

TaskSpec power_task() {
    TaskSpec t;
    t.name = "power";
    t.history_len = 144;  // 24 h of 10-min records
    t.horizon_len = 36;   // 6 h
    t.target_variable = "Patv";
    t.target_aliases = {"active power", "power output"};
    t.rule = LabelRule::MeanComparisonBinary;
    t.delta_kind = DeltaKind::Absolute;
    t.delta = 0.0;
    t.classes = {
        {"not surpass the average active power of the past 24 hours",
         "not higher than the average of the past 24 hours", "not surpass"},
        {"surpass the average active power of the past 24 hours",
         "higher than the average of the past 24 hours", "surpass"},
    };
    t.prompt = {
        .domain = "wind power generation",
        .analyst_domain = "wind power generation",
        .data_domain = "wind turbine and meteorological",
        .history_phrase = "24-hour",
        .future_phrase = "6 hours",
        .target_phrase = "power output",
        .target_detail = "average active power ('Patv')",
        .reasoning_task = "be higher than the average of the past 24 hours",
        .reference_phrase = "the average of the past 24 hours",
    };
    t.default_stride = 0;
    return t;
}

TaskSpec task_preset(std::string_view name) {
    if (name == "finance") return finance_task();
    if (name == "traffic") return traffic_task();
    if (name == "power") return power_task();
    throw TaskError("unknown task preset '" + std::string(name) + "'");
}

namespace {

std::string rule_name(LabelRule r) {
    return r == LabelRule::ThresholdDelta3Class ? "threshold-delta-3class" : "mean-comparison-binary";
}

LabelRule parse_rule(const std::string& s) {
    if (s == "threshold-delta-3class") return LabelRule::ThresholdDelta3Class;
    if (s == "mean-comparison-binary") return LabelRule::MeanComparisonBinary;
    throw TaskError("unknown label rule '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const TaskSpec& t) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : t.classes) {
        classes.push_back({{"meaning", c.meaning}, {"prompt_text", c.prompt_text}, {"keyword", c.keyword}});
    }
    j = {
        {"name", t.name},
        {"history_len", t.history_len},
        {"horizon_len", t.horizon_len},
        {"target_variable", t.target_variable},
        {"target_aliases", t.target_aliases},
        {"label_rule", rule_name(t.rule)},
        {"delta_kind", t.delta_kind == DeltaKind::Relative ? "relative" : "absolute"},
        {"delta", t.delta},
        {"classes", classes},
        {"default_stride", t.default_stride},
        {"prompt",
         {{"domain", t.prompt.domain},
          {"analyst_domain", t.prompt.analyst_domain},
          {"data_domain", t.prompt.data_domain},
          {"history_phrase", t.prompt.history_phrase},
          {"future_phrase", t.prompt.future_phrase},
          {"target_phrase", t.prompt.target_phrase},
          {"target_detail", t.prompt.target_detail},
          {"reasoning_task", t.prompt.reasoning_task},
          {"reference_phrase", t.prompt.reference_phrase}}},
    };
}

void from_json(const nlohmann::json& j, TaskSpec& t) {
    // A preset name may seed the spec; explicit fields override it.
    if (j.contains("preset")) t = task_preset(j.at("preset").get<std::string>());
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("name", t.name);
    get("history_len", t.history_len);
    get("horizon_len", t.horizon_len);
    get("target_variable", t.target_variable);
    get("target_aliases", t.target_aliases);
    if (j.contains("label_rule")) t.rule = parse_rule(j.at("label_rule").get<std::string>());
    if (j.contains("delta_kind")) {
        const auto kind = j.at("delta_kind").get<std::string>();
        if (kind == "relative") {
            t.delta_kind = DeltaKind::Relative;
        } else if (kind == "absolute") {
            t.delta_kind = DeltaKind::Absolute;
        } else {
            throw TaskError("unknown delta_kind '" + kind + "'");
        }
    }
    get("delta", t.delta);
    get("default_stride", t.default_stride);
    if (j.contains("classes")) {
        t.classes.clear();
        for (const auto& c : j.at("classes")) {
            ClassInfo info;
            info.meaning = c.at("meaning").get<std::string>();
            info.prompt_text = c.value("prompt_text", info.meaning);
            info.keyword = c.value("keyword", std::string{});
            t.classes.push_back(std::move(info));
        }
    }
    if (j.contains("prompt")) {
        const auto& p = j.at("prompt");
        auto slot = [&](const char* key, std::string& field) {
            if (p.contains(key)) p.at(key).get_to(field);
        };
        slot("domain", t.prompt.domain);
        slot("analyst_domain", t.prompt.analyst_domain);
        slot("data_domain", t.prompt.data_domain);
        slot("history_phrase", t.prompt.history_phrase);
        slot("future_phrase", t.prompt.future_phrase);
        slot("target_phrase", t.prompt.target_phrase);
        slot("target_detail", t.prompt.target_detail);
        slot("reasoning_task", t.prompt.reasoning_task);
        slot("reference_phrase", t.prompt.reference_phrase);
    }
}

}  // namespace rationalets
