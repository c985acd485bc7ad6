#include "rationalets/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "rationalets/error.hpp"
#include "rationalets/util.hpp"

namespace rationalets {

void ConfusionMatrix::add(int truth, int pred) {
    if (truth < 0 || pred < 0 || static_cast<std::size_t>(truth) >= n || static_cast<std::size_t>(pred) >= n) {
        throw ParameterError("label pair (" + std::to_string(truth) + ", " + std::to_string(pred) +
                             ") outside a " + std::to_string(n) + "-class confusion matrix");
    }
    ++at(static_cast<std::size_t>(truth), static_cast<std::size_t>(pred));
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

double macro_f1(const ConfusionMatrix& cm) {
    if (cm.n == 0) throw ParameterError("empty confusion matrix");
    double sum = 0.0;
    for (std::size_t c = 0; c < cm.n; ++c) {
        std::int64_t tp = cm.at(c, c);
        std::int64_t fp = 0;
        std::int64_t fn = 0;
        for (std::size_t o = 0; o < cm.n; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        const std::int64_t den = 2 * tp + fp + fn;
        sum += den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
    }
    return 100.0 * sum / static_cast<double>(cm.n);
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw ShapeError("scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Mid-ranks over tied scores.
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }
    double pos = 0.0;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (positive[i]) {
            pos += 1.0;
            rank_sum += rank[i];
        }
    }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) throw ParameterError("AUC needs both positives and negatives");
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double auc_ovr(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t num_classes,
               std::vector<std::string>* warnings) {
    if (truth.size() != pred.size()) throw ShapeError("truth and prediction lists differ in length");
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<double> scores(truth.size());
        std::vector<bool> positive(truth.size());
        std::size_t p = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            positive[i] = truth[i] == static_cast<int>(c);
            scores[i] = pred[i] == static_cast<int>(c) ? 1.0 : 0.0;
            p += positive[i] ? 1 : 0;
        }
        if (p == 0 || p == truth.size()) {
            if (warnings) {
                warnings->push_back("class " + std::to_string(c) + (p == 0 ? " has no support" : " has no negatives") +
                                    "; excluded from AUC");
            }
            continue;
        }
        sum += roc_auc(scores, positive);
        ++used;
    }
    if (used < 2) {
        throw ParameterError("AUC needs at least two classes with support");
    }
    return 100.0 * sum / static_cast<double>(used);
}

EvalReport evaluate(const std::vector<InferenceRecord>& records, const TaskSpec& task, std::size_t k, double lambda,
                    int fallback_label) {
    if (records.empty()) throw ParameterError("no records to evaluate");
    EvalReport r;
    r.variant = records.front().variant;
    r.mode = records.front().mode;
    r.k = k;
    r.lambda = lambda;
    r.fallback_label = fallback_label;
    r.n_queries = records.size();
    r.confusion = ConfusionMatrix(task.num_classes());

    std::vector<int> truth;
    std::vector<int> pred;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::size_t hits = 0;
    bool any_retrieval = false;
    for (const auto& rec : records) {
        if (!rec.true_label) throw ParameterError("record '" + rec.query_id + "' has no true label");
        if (rec.parse_status == ParseStatus::Failed) {
            ++r.n_parse_failures;
        } else {
            ++r.n_scored;
        }
        r.confusion.add(*rec.true_label, rec.prediction);
        truth.push_back(*rec.true_label);
        pred.push_back(rec.prediction);
        prompt_tokens += rec.prompt_tokens;
        completion_tokens += rec.completion_tokens;
        if (!rec.retrieved_labels.empty()) any_retrieval = true;
        if (std::find(rec.retrieved_labels.begin(), rec.retrieved_labels.end(), *rec.true_label) !=
            rec.retrieved_labels.end()) {
            ++hits;
        }
    }
    r.f1 = macro_f1(r.confusion);
    r.auc = auc_ovr(truth, pred, task.num_classes(), &r.warnings);
    if (any_retrieval || r.mode == to_string(InferenceMode::RationaleGrounded)) {
        r.hit_rate = static_cast<double>(hits) / static_cast<double>(records.size());
    }
    r.avg_prompt_tokens = static_cast<double>(prompt_tokens) / static_cast<double>(records.size());
    r.avg_completion_tokens = static_cast<double>(completion_tokens) / static_cast<double>(records.size());
    if (r.n_parse_failures > 0) {
        r.warnings.push_back(std::to_string(r.n_parse_failures) + " unparsed replies scored as label " +
                             std::to_string(fallback_label));
    }
    return r;
}

nlohmann::json to_json(const EvalReport& r) {
    return {
        {"variant", r.variant},
        {"mode", r.mode},
        {"K", r.k},
        {"lambda", r.lambda},
        {"f1", r.f1},
        {"auc", r.auc},
        {"hit_rate", r.hit_rate ? nlohmann::json(*r.hit_rate) : nlohmann::json(nullptr)},
        {"n_queries", r.n_queries},
        {"n_scored", r.n_scored},
        {"n_parse_failures", r.n_parse_failures},
        {"fallback_label", r.fallback_label},
        {"avg_prompt_tokens", r.avg_prompt_tokens},
        {"avg_completion_tokens", r.avg_completion_tokens},
        {"confusion", {{"classes", r.confusion.n}, {"counts", r.confusion.counts}}},
        {"warnings", r.warnings},
    };
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.variant = j.at("variant").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.k = j.at("K").get<std::size_t>();
    r.lambda = j.at("lambda").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.auc = j.at("auc").get<double>();
    if (!j.at("hit_rate").is_null()) r.hit_rate = j.at("hit_rate").get<double>();
    r.n_queries = j.at("n_queries").get<std::size_t>();
    r.n_scored = j.at("n_scored").get<std::size_t>();
    r.n_parse_failures = j.at("n_parse_failures").get<std::size_t>();
    r.fallback_label = j.value("fallback_label", 0);
    r.avg_prompt_tokens = j.value("avg_prompt_tokens", 0.0);
    r.avg_completion_tokens = j.value("avg_completion_tokens", 0.0);
    const auto& cm = j.at("confusion");
    r.confusion = ConfusionMatrix(cm.at("classes").get<std::size_t>());
    r.confusion.counts = cm.at("counts").get<std::vector<std::int64_t>>();
    r.warnings = j.value("warnings", std::vector<std::string>{});
    return r;
}

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string render_report_table(const std::vector<EvalReport>& reports) {
    const std::vector<std::string> header = {"Variant", "Mode", "K", "lambda", "F1", "AUC", "HitRate",
                                             "n", "failed", "avg_prompt_tok"};
    std::vector<std::vector<std::string>> rows{header};
    for (const auto& r : reports) {
        rows.push_back({r.variant, r.mode, std::to_string(r.k), format_double(r.lambda), fixed(r.f1, 2), fixed(r.auc, 2),
                        r.hit_rate ? fixed(*r.hit_rate, 4) : "-", std::to_string(r.n_queries),
                        std::to_string(r.n_parse_failures), fixed(r.avg_prompt_tokens, 1)});
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) line += "  ";
            const std::string pad(width[c] - row[c].size(), ' ');
            line += c < 2 ? row[c] + pad : pad + row[c];  // text left, numbers right
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    };
    emit(rows[0]);
    std::size_t total = 0;
    for (auto w : width) total += w;
    out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    for (std::size_t i = 1; i < rows.size(); ++i) emit(rows[i]);
    return out;
}

std::string sweep_cell_name(std::size_t k, double lambda) { return std::to_string(k) + "_" + format_double(lambda); }

void write_reports(const std::vector<EvalReport>& reports, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_file_atomic(out_dir / "report.txt", render_report_table(reports));
    std::string jsonl;
    for (const auto& r : reports) jsonl += to_json(r).dump() + "\n";
    write_file_atomic(out_dir / "report.jsonl", jsonl);
}

namespace {

std::string metric_row(const EvalReport& r) {
    return fixed(r.f1, 6) + "\t" + fixed(r.auc, 6) + "\t" + (r.hit_rate ? fixed(*r.hit_rate, 6) : "nan");
}

}  // namespace

std::vector<EvalReport> sweep(const RationaleBase& base, const std::vector<Sample>& queries, const TaskSpec& task,
                              const SweepGrid& grid, const InferenceParams& params, const InferenceRoles& roles,
                              const RunOptions& options, const std::filesystem::path& out_dir,
                              const nlohmann::json& manifest_extra) {
    if (grid.k_values.empty() || grid.lambda_values.empty()) throw ParameterError("sweep grid has an empty axis");
    if (params.variant.mode != InferenceMode::RationaleGrounded) {
        throw ModeError("sweeps vary K and lambda of rationale retrieval; mode must be rationale-grounded");
    }
    for (double l : grid.lambda_values) {
        if (!(l >= 0.0 && l <= 1.0)) throw ParameterError("lambda " + format_double(l) + " outside [0, 1]");
    }
    for (auto k : grid.k_values) {
        if (k == 0) throw ParameterError("K must be at least 1");
    }

    const auto prepared =
        prepare_queries(queries, task, params.variant.mode, roles, params.chart_style, options.jobs);

    std::vector<EvalReport> reports;
    std::map<std::pair<std::size_t, double>, const EvalReport*> by_cell;
    for (auto k : grid.k_values) {
        for (double lambda : grid.lambda_values) {
            InferenceParams cell = params;
            cell.retrieval.k = k;
            cell.retrieval.lambda = lambda;
            const auto records = run_queries(prepared, &base, nullptr, task, cell, roles, options,
                                             out_dir / "sweep" / sweep_cell_name(k, lambda), manifest_extra);
            reports.push_back(evaluate(records, task, k, lambda, cell.fallback_label));
            write_reports({reports.back()}, out_dir / "sweep" / sweep_cell_name(k, lambda));
        }
    }
    for (const auto& r : reports) by_cell[{r.k, r.lambda}] = &r;

    write_reports(reports, out_dir);

    std::string vs_k = "lambda\tK\tf1\tauc\thit_rate\n";
    for (double lambda : grid.lambda_values) {
        for (auto k : grid.k_values) {
            vs_k += format_double(lambda) + "\t" + std::to_string(k) + "\t" + metric_row(*by_cell.at({k, lambda})) + "\n";
        }
    }
    std::string vs_lambda = "K\tlambda\tf1\tauc\thit_rate\n";
    for (auto k : grid.k_values) {
        for (double lambda : grid.lambda_values) {
            vs_lambda +=
                std::to_string(k) + "\t" + format_double(lambda) + "\t" + metric_row(*by_cell.at({k, lambda})) + "\n";
        }
    }
    write_file_atomic(out_dir / "plot_vs_k.tsv", vs_k);
    write_file_atomic(out_dir / "plot_vs_lambda.tsv", vs_lambda);
    return reports;
}

}  // namespace rationalets
