#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rationalets/pipeline.hpp"
#include "rationalets/util.hpp"

namespace fixtures {

using namespace rationalets;

std::filesystem::path source_dir() { return RATIONALETS_TEST_SOURCE_DIR; }

std::string read_golden(const std::string& name) { return read_file(source_dir() / "golden" / name); }

Sample tiny_traffic_sample(const std::string& id, std::optional<int> label) {
    Sample s;
    s.id = id;
    s.variable_names = {"Intensity", "Occupancy"};
    s.window = Matrix(3, 2);
    const double v[3][2] = {{812, 12.5}, {790.5, 13.75}, {805, 11}};
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 2; ++c) s.window(r, c) = v[r][c];
    }
    const auto t0 = parse_iso8601("2021-03-01T00:00:00");
    s.timestamps = {t0, t0 + 3600, t0 + 7200};
    s.start_ts = t0;
    s.label = label;
    return s;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::path(RATIONALETS_TEST_BINARY_DIR) / "scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// ------------------------------------------------------------------ labels

namespace {

using Fn = std::function<double(std::size_t)>;

Fn constant(double v) {
    return [v](std::size_t) { return v; };
}

// History that wanders before landing on `last` at its final step.
Fn ending_at(double last, std::size_t len) {
    return [last, len](std::size_t t) { return t + 1 == len ? last : last + 0.7 * static_cast<double>((t * 7) % 5) - 1.3; };
}

LabelCase delta_case(const std::string& note, double last, double next, int expected, std::size_t history_len) {
    return {note, ending_at(last, history_len), constant(next), expected};
}

std::vector<LabelCase> finance_cases() {
    const std::size_t h = 20;
    const double rows[][3] = {
        {100, 101, 1},          {100, 99, 1},           {100, 101.0001, 2},     {100, 98.9999, 0},
        {100, 100, 1},          {50, 50.5, 1},          {50, 50.6, 2},          {50, 49.4, 0},
        {4000, 4040, 1},        {4000, 4040.5, 2},      {4000, 3959.5, 0},      {4000, 3960, 1},
        {1, 1.02, 2},           {1, 0.98, 0},           {1, 1.005, 1},          {3312.57, 3350.0, 2},
        {3312.57, 3280.0, 1},   {3312.57, 3270.0, 0},   {0.5, 0.505, 1},        {0.3, 0.303, 1},
        {200, 202, 1},          {200, 198, 1},          {200, 202.01, 2},       {200, 197.99, 0},
        {1234.5, 1246.845, 1},  {1234.5, 1250, 2},      {1234.5, 1220, 0},      {10, 10.1, 1},
        {10, 9.9, 1},           {10, 10.11, 2},
    };
    std::vector<LabelCase> out;
    for (const auto& r : rows) {
        out.push_back(delta_case("last " + format_double(r[0]) + " next " + format_double(r[1]), r[0], r[1],
                                 static_cast<int>(r[2]), h));
    }
    return out;
}

std::vector<LabelCase> traffic_cases() {
    const std::size_t h = 12;
    const double rows[][3] = {
        {10, 12, 1},      {10, 8, 1},       {10, 12.01, 2},   {10, 7.99, 0},    {0, 2, 1},
        {0, 2.5, 2},      {5.5, 3.5, 1},    {5.5, 3.4, 0},    {20.1, 22.1, 1},  {20.1, 22.2, 2},
        {30, 27.9, 0},    {30, 28, 1},      {0, 0, 1},        {45.3, 47.3, 1},  {45.3, 43.3, 1},
        {45.3, 47.31, 2}, {45.3, 43.29, 0}, {1.1, 3.1, 1},    {1.1, 3.2, 2},    {7, 4, 0},
        {7, 10, 2},       {7, 7.5, 1},      {12.6, 14.6, 1},  {12.6, 10.6, 1},  {12.6, 15, 2},
        {12.6, 10, 0},    {99, 101, 1},     {99, 96.9, 0},    {3.3, 5.3, 1},    {3.3, 5.4, 2},
    };
    std::vector<LabelCase> out;
    for (const auto& r : rows) {
        out.push_back(delta_case("last " + format_double(r[0]) + " next " + format_double(r[1]), r[0], r[1],
                                 static_cast<int>(r[2]), h));
    }
    return out;
}

std::vector<LabelCase> power_cases() {
    auto alt = [](double lo, double hi) { return [lo, hi](std::size_t t) { return t % 2 == 0 ? lo : hi; }; };
    auto ramp = [](double a, double b) { return [a, b](std::size_t t) { return a + b * static_cast<double>(t); }; };
    auto saw = [](double base, double shift) {
        return [base, shift](std::size_t t) { return base + shift + static_cast<double>(t % 12); };
    };
    return {
        {"equal constants", constant(10), constant(10), 0},
        {"slightly above", constant(10), constant(10.001), 1},
        {"slightly below", constant(10), constant(9.999), 0},
        {"alternating mean 10 vs 10", alt(0, 20), constant(10), 0},
        {"alternating mean 10 vs 10.5", alt(0, 20), constant(10.5), 1},
        {"ramp mean 71.5 vs 71.5", ramp(0, 1), constant(71.5), 0},
        {"ramp mean 71.5 vs 71.6", ramp(0, 1), constant(71.6), 1},
        {"ramp vs short ramp", ramp(0, 1), ramp(0, 1), 0},
        {"descending ramp vs high ramp", ramp(143, -1), ramp(100, 1), 1},
        {"negative rising", constant(-5), constant(-4), 1},
        {"negative falling", constant(-5), constant(-6), 0},
        {"0.1 sums", constant(0.1), constant(0.1), 0},
        {"0.1 vs 0.1000001", constant(0.1), constant(0.1000001), 1},
        {"all zero", constant(0), constant(0), 0},
        {"horizon spike mean 1", constant(0), [](std::size_t t) { return t == 0 ? 36.0 : 0.0; }, 1},
        {"history spike mean 1 vs 1", [](std::size_t t) { return t == 0 ? 144.0 : 0.0; }, constant(1), 0},
        {"history spike mean 1 vs 1.01", [](std::size_t t) { return t == 0 ? 144.0 : 0.0; }, constant(1.01), 1},
        {"step horizon mean 1500", constant(1500), [](std::size_t t) { return t < 18 ? 2000.0 : 1000.0; }, 0},
        {"step horizon mean 1500.5", constant(1500), [](std::size_t t) { return t < 18 ? 2001.0 : 1000.0; }, 1},
        {"square wave vs 999", alt(1500, 500), constant(999), 0},
        {"square wave vs 1001", alt(1500, 500), constant(1001), 1},
        {"half step mean 100 vs 100", [](std::size_t t) { return t < 72 ? 0.0 : 200.0; }, constant(100), 0},
        {"half step vs mean 101", [](std::size_t t) { return t < 72 ? 0.0 : 200.0; },
         [](std::size_t t) { return t < 35 ? 100.0 : 136.0; }, 1},
        {"horizon dip", constant(300), [](std::size_t t) { return t == 0 ? 299.5 : 300.0; }, 0},
        {"history dip", [](std::size_t t) { return t == 143 ? 299.0 : 300.0; }, constant(300), 1},
        {"negative ramp vs -71.5", ramp(0, -1), constant(-71.5), 0},
        {"negative ramp vs -70", ramp(0, -1), constant(-70), 1},
        {"sawtooth vs 55.5", saw(50, 0), constant(55.5), 0},
        {"sawtooth vs same sawtooth", saw(50, 0), saw(50, 0), 0},
        {"sawtooth vs shifted sawtooth", saw(50, 0), saw(50, 1), 1},
    };
}

}  // namespace

std::vector<LabelCase> label_cases(const std::string& task) {
    if (task == "finance") return finance_cases();
    if (task == "traffic") return traffic_cases();
    if (task == "power") return power_cases();
    throw std::invalid_argument("unknown task " + task);
}

int label_via_windowing(const TaskSpec& task, const LabelCase& c) {
    SeriesTable series;
    series.variable_names = {"distractor", task.target_variable};
    const std::size_t n = task.history_len + task.horizon_len;
    series.values = Matrix(n, 2);
    const auto t0 = parse_iso8601("2020-01-01T00:00:00");
    for (std::size_t r = 0; r < n; ++r) {
        series.timestamps.push_back(t0 + static_cast<std::int64_t>(r) * 600);
        series.values(r, 0) = 1000.0 - static_cast<double>(r);
        series.values(r, 1) = r < task.history_len ? c.history(r) : c.horizon(r - task.history_len);
    }
    series.frequency_seconds = 600;
    const auto samples = window_samples(series, task, n);
    if (samples.size() != 1 || !samples[0].label) throw std::runtime_error("fixture did not yield one labeled window");
    return *samples[0].label;
}

// -------------------------------------------------------------------- leaks

std::vector<LeakText> planted_leaks() {
    return {
        {"finance", "- VIX spikes -> the S&P 500 will decrease by over 1%"},
        {"finance", "- Momentum fades -> the index should remain stable"},
        {"finance", "- Breadth improves -> S&P 500 is likely to increase next session"},
        {"finance", "- Yen strengthens -> Label: 0"},
        {"finance", "- Gold rallies -> prediction: 2"},
        {"finance", "- Risk appetite returns -> class 2 is what follows"},
        {"finance", "- Nikkei slides -> the SPX will likely decrease tomorrow"},
        {"traffic", "- Intensity ramps up -> Occupancy will increase by 2"},
        {"traffic", "- NO2 builds -> occupancy is expected to decrease in the next hour"},
        {"traffic", "- Flow saturates -> labeled as 1"},
        {"traffic", "- Humidity drops -> Occupancy should remain stable"},
        {"traffic", "- Rush hour begins -> occupancy will likely increase"},
        {"traffic", "- Solar radiation peaks -> this precedes an increase by 2 in Occupancy"},
        {"traffic", "- Temperature falls -> prediction = 0"},
        {"power", "- Wind speed climbs -> output will surpass the average active power of the past 24 hours"},
        {"power", "- Gusts ease -> Patv is expected to not surpass its daily mean"},
        {"power", "- Pitch angles flatten -> Label 1"},
        {"power", "- Night cooling sets in -> active power will likely surpass the recent level"},
        {"power", "- Ambient temperature rises -> power output in the upcoming hours will not surpass yesterday"},
        {"power", "- Nacelle temperature holds -> class: 0"},
    };
}

std::vector<LeakText> clean_rationales() {
    return {
        {"finance", "- VIX has eased over the last five sessions -> risk appetite is recovering\n"
                    "- Gold and the yen move together -> a defensive bid persists"},
        {"finance", "- S&P 500 closed near the top of its range -> buying pressure dominated the window\n"
                    "- Crude oil is flat -> energy costs are not a headwind"},
        {"finance", "- FTSE 100 and Nikkei 225 drift lower -> global sentiment softened"},
        {"traffic", "- Occupancy rises steadily through the morning -> demand builds with commuter flow"},
        {"traffic", "- NO2 tracks Intensity closely -> congestion is traffic-driven\n"
                    "- Humidity falls while Temperature rises -> clear daytime conditions"},
        {"traffic", "- Occupancy showed an increase earlier in the window -> a build-up pattern is visible"},
        {"traffic", "- Wind speed is low -> pollutants accumulate near the road"},
        {"power", "- Wspd climbs above 8 m/s -> turbines operate near rated output\n"
                  "- Patv tracks wind speed -> no curtailment is present"},
        {"power", "- Nacelle and ambient temperatures diverge -> the turbine is under load"},
        {"power", "- Patv was stable during the night -> steady wind resource"},
    };
}

// ---------------------------------------------------------------- retrieval

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    double ss = 0.0;
    for (auto& x : v) {
        x = n(rng);
        ss += x * x;
    }
    for (auto& x : v) x /= std::sqrt(ss);
    return v;
}

OracleBase random_base(std::mt19937_64& rng, std::size_t d, std::size_t dim_b, std::size_t dim_s) {
    OracleBase b;
    for (std::size_t i = 0; i < d; ++i) {
        b.ids.push_back("b" + std::to_string(i));
        b.temporal.append(random_unit(rng, dim_b));
        b.semantic.append(random_unit(rng, dim_s));
    }
    return b;
}

namespace {

double oracle_cosine(const std::vector<double>& q, const EmbeddingTable& t, std::size_t row) {
    long double dot = 0, nq = 0, nr = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        const double r = t.data[row * t.dim + j];
        dot += q[j] * r;
        nq += q[j] * q[j];
        nr += r * r;
    }
    if (nq == 0 || nr == 0) return 0.0;
    return static_cast<double>(dot / std::sqrt(nq * nr));
}

std::vector<std::string> take_sorted(std::vector<std::pair<double, std::size_t>> scored,
                                     const std::vector<std::string>& ids, std::size_t k) {
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k && i < scored.size(); ++i) out.push_back(ids[scored[i].second]);
    return out;
}

}  // namespace

std::vector<std::string> brute_force_top_k(const OracleBase& base, const std::vector<double>& qb,
                                           const std::vector<double>& qs, std::size_t k, double lambda) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < base.ids.size(); ++i) {
        // Same arithmetic shape as the fusion rule so scores compare exactly.
        const double sb = std::clamp(oracle_cosine(qb, base.temporal, i), -1.0, 1.0);
        const double ss = std::clamp(oracle_cosine(qs, base.semantic, i), -1.0, 1.0);
        scored.emplace_back(lambda * sb + (1.0 - lambda) * ss, i);
    }
    return take_sorted(std::move(scored), base.ids, k);
}

std::vector<std::string> brute_force_single(const EmbeddingTable& table, const std::vector<std::string>& ids,
                                            const std::vector<double>& q, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < ids.size(); ++i) scored.emplace_back(oracle_cosine(q, table, i), i);
    return take_sorted(std::move(scored), ids, k);
}

// ------------------------------------------------------------------ metrics

double oracle_macro_f1(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t classes) {
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        double tp = 0, predicted = 0, actual = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i] == static_cast<int>(c);
            const bool p = pred[i] == static_cast<int>(c);
            tp += (t && p) ? 1 : 0;
            predicted += p ? 1 : 0;
            actual += t ? 1 : 0;
        }
        const double precision = predicted > 0 ? tp / predicted : 0.0;
        const double recall = actual > 0 ? tp / actual : 0.0;
        sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    }
    return 100.0 * sum / static_cast<double>(classes);
}

namespace {

struct Rates {
    double tpr;
    double fpr;
};

std::vector<Rates> one_hot_rates(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t classes) {
    std::vector<Rates> out;
    for (std::size_t c = 0; c < classes; ++c) {
        double pos = 0, neg = 0, tp = 0, fp = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i] == static_cast<int>(c);
            const bool p = pred[i] == static_cast<int>(c);
            (t ? pos : neg) += 1;
            if (p) (t ? tp : fp) += 1;
        }
        if (pos == 0 || neg == 0) continue;
        out.push_back({tp / pos, fp / neg});
    }
    return out;
}

}  // namespace

double oracle_auc_balanced(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t classes) {
    const auto rates = one_hot_rates(truth, pred, classes);
    double sum = 0.0;
    for (const auto& r : rates) sum += (r.tpr + (1.0 - r.fpr)) / 2.0;
    return 100.0 * sum / static_cast<double>(rates.size());
}

double oracle_auc_trapezoid(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t classes) {
    const auto rates = one_hot_rates(truth, pred, classes);
    double sum = 0.0;
    for (const auto& r : rates) {
        // ROC points (0,0) -> (fpr,tpr) -> (1,1).
        const double xs[3] = {0.0, r.fpr, 1.0};
        const double ys[3] = {0.0, r.tpr, 1.0};
        double area = 0.0;
        for (int i = 0; i < 2; ++i) area += (xs[i + 1] - xs[i]) * (ys[i + 1] + ys[i]) / 2.0;
        sum += area;
    }
    return 100.0 * sum / static_cast<double>(rates.size());
}

// -------------------------------------------------------------- end to end

std::string run_fixture_sweep(const std::filesystem::path& dir) {
    std::filesystem::remove_all(dir);
    RunConfig cfg;
    cfg.task = traffic_task();
    cfg.data_path = source_dir() / "fixtures" / "traffic_small.csv";
    cfg.split_ratio = 0.75;
    cfg.samples_dir = dir / "samples";
    cfg.base_dir = dir / "base";
    cfg.run_dir = dir / "run";
    cfg.sweep = {{1, 5}, {0.0, 0.5, 1.0}};
    std::ostringstream log;
    cmd_ingest(cfg, log);
    cmd_build_base(cfg, log);
    cmd_sweep(cfg, log);
    std::string out;
    for (const char* f : {"report.txt", "report.jsonl", "plot_vs_k.tsv", "plot_vs_lambda.tsv"}) {
        out += read_file(cfg.run_dir / f);
    }
    return out;
}

}  // namespace fixtures
