#include "rationalets/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "rationalets/error.hpp"
#include "rationalets/util.hpp"

namespace rationalets {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(trim(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.push_back(trim(field));
    return out;
}

bool is_missing_token(const std::string& s) {
    if (s.empty()) return true;
    const auto l = to_lower(s);
    return l == "na" || l == "nan" || l == "null" || l == "n/a";
}

bool parse_number(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, out);
    return res.ec == std::errc{} && res.ptr == last && std::isfinite(out);
}

int parse_int_field(std::string_view s, std::size_t pos, std::size_t len) {
    if (pos + len > s.size()) throw ParseError("malformed timestamp '" + std::string(s) + "'");
    int v = 0;
    auto res = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (res.ec != std::errc{} || res.ptr != s.data() + pos + len) {
        throw ParseError("malformed timestamp '" + std::string(s) + "'");
    }
    return v;
}

// Tolerance for threshold comparisons so that decimal inputs sitting exactly
// on a boundary (e.g. 10.3 -> 12.3 with delta 2) classify as "within".
double boundary_tolerance(double a, double b) {
    return 1e-9 * std::max({1.0, std::fabs(a), std::fabs(b)});
}

}  // namespace

std::size_t SeriesTable::column_index(const std::string& name) const {
    auto it = std::find(variable_names.begin(), variable_names.end(), name);
    if (it == variable_names.end()) throw SchemaError("unknown variable '" + name + "'");
    return static_cast<std::size_t>(it - variable_names.begin());
}

std::int64_t parse_iso8601(const std::string& raw) {
    using namespace std::chrono;
    const std::string text = trim(raw);
    // YYYY-MM-DD is mandatory.
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') {
        throw ParseError("malformed timestamp '" + text + "'");
    }
    const int y = parse_int_field(text, 0, 4);
    const int mo = parse_int_field(text, 5, 2);
    const int d = parse_int_field(text, 8, 2);
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw ParseError("invalid calendar date '" + text + "'");
    int hh = 0, mm = 0, ss = 0;
    std::size_t pos = 10;
    if (pos < text.size() && (text[pos] == 'T' || text[pos] == ' ')) {
        hh = parse_int_field(text, pos + 1, 2);
        if (pos + 3 >= text.size() || text[pos + 3] != ':') throw ParseError("malformed timestamp '" + text + "'");
        mm = parse_int_field(text, pos + 4, 2);
        pos += 6;
        if (pos < text.size() && text[pos] == ':') {
            ss = parse_int_field(text, pos + 1, 2);
            pos += 3;
        }
    }
    if (pos < text.size() && text[pos] == 'Z') ++pos;
    if (pos != text.size() || hh > 23 || mm > 59 || ss > 60) {
        throw ParseError("malformed timestamp '" + text + "'");
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 86400 + hh * 3600 + mm * 60 + ss;
}

std::string format_iso8601(std::int64_t epoch_seconds) {
    using namespace std::chrono;
    std::int64_t days = epoch_seconds / 86400;
    std::int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60), static_cast<int>(rem % 60));
    return buf;
}

SeriesTable load_dataset(const std::filesystem::path& path, const ColumnSchema& schema) {
    std::ifstream in(path);
    if (!in) throw SchemaError("dataset file not found: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("dataset file is empty: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // Strip a UTF-8 BOM.
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_fields(line, schema.delimiter);

    auto find_col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw SchemaError("missing column '" + name + "' in " + path.string());
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ts_col = find_col(schema.timestamp_column);
    std::vector<std::size_t> var_cols;
    for (const auto& v : schema.variables) {
        if (std::count(schema.variables.begin(), schema.variables.end(), v) > 1) {
            throw SchemaError("variable '" + v + "' declared twice");
        }
        var_cols.push_back(find_col(v));
    }

    SeriesTable table;
    table.variable_names = schema.variables;
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line, schema.delimiter);
        if (fields.size() != header.size()) {
            throw ParseError(path.string() + ": row " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, header has " + std::to_string(header.size()));
        }
        std::int64_t ts = 0;
        try {
            if (schema.timestamp_format == TimestampFormat::Iso8601) {
                ts = parse_iso8601(fields[ts_col]);
            } else {
                double secs = 0;
                if (!parse_number(fields[ts_col], secs)) throw ParseError("bad epoch value");
                ts = static_cast<std::int64_t>(std::llround(secs));
            }
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": row " + std::to_string(line_no) + ": " + e.what());
        }
        if (!table.timestamps.empty() && ts <= table.timestamps.back()) {
            throw OrderingError(path.string() + ": row " + std::to_string(line_no) +
                                ": timestamp not strictly increasing (" + fields[ts_col] + ")");
        }
        table.timestamps.push_back(ts);
        for (std::size_t k = 0; k < var_cols.size(); ++k) {
            const auto& cell = fields[var_cols[k]];
            double v = 0;
            if (is_missing_token(cell)) {
                v = kMissing;
            } else if (!parse_number(cell, v)) {
                throw ParseError(path.string() + ": row " + std::to_string(line_no) + ", column '" +
                                 schema.variables[k] + "': non-numeric value '" + cell + "'");
            }
            values.push_back(v);
        }
    }
    table.values = Matrix(table.timestamps.size(), var_cols.size(), std::move(values));
    if (table.timestamps.size() >= 2) table.frequency_seconds = table.timestamps[1] - table.timestamps[0];
    return table;
}

ColumnSchema default_schema(const TaskSpec& task) {
    ColumnSchema s;
    s.timestamp_column = "timestamp";
    if (task.name == "finance") {
        s.variables = {"S&P 500", "VIX", "Nikkei 225", "FTSE 100", "Gold Futures", "Crude Oil Futures",
                       "EUR/USD", "USD/JPY", "USD/CNY"};
    } else if (task.name == "traffic") {
        s.variables = {"NO2", "WindSpeed", "Temperature", "Humidity", "SolarRad", "Intensity", "Occupancy"};
    } else if (task.name == "power") {
        s.variables = {"Wspd", "Wspd_w", "Etmp", "Itmp", "Pab1", "Pab2", "Pab3", "Sp", "Patv"};
    } else {
        s.variables = {task.target_variable};
    }
    return s;
}

int derive_label(const Matrix& history, const Matrix& horizon, const TaskSpec& task, std::size_t target_col) {
    if (history.rows() == 0) throw InsufficientDataError("history window is empty");
    if (horizon.rows() < task.horizon_len) {
        throw InsufficientDataError("horizon has " + std::to_string(horizon.rows()) + " rows, task '" +
                                    task.name + "' needs " + std::to_string(task.horizon_len));
    }
    if (target_col >= history.cols() || target_col >= horizon.cols()) {
        throw SchemaError("target column index out of range");
    }
    switch (task.rule) {
        case LabelRule::ThresholdDelta3Class: {
            const double last = history(history.rows() - 1, target_col);
            const double next = horizon(task.horizon_len - 1, target_col);
            const double bound = task.delta_kind == DeltaKind::Relative ? task.delta * std::fabs(last) : task.delta;
            const double change = next - last;
            const double tol = boundary_tolerance(last, next);
            if (change < -bound - tol) return 0;
            if (change > bound + tol) return 2;
            return 1;
        }
        case LabelRule::MeanComparisonBinary: {
            double hist_sum = 0.0;
            for (std::size_t r = 0; r < history.rows(); ++r) hist_sum += history(r, target_col);
            double hor_sum = 0.0;
            for (std::size_t r = 0; r < task.horizon_len; ++r) hor_sum += horizon(r, target_col);
            const double hist_mean = hist_sum / static_cast<double>(history.rows());
            const double hor_mean = hor_sum / static_cast<double>(task.horizon_len);
            return hor_mean > hist_mean + boundary_tolerance(hist_mean, hor_mean) ? 1 : 0;
        }
    }
    throw TaskError("unhandled label rule");
}

std::string sample_id(const std::string& dataset, std::size_t start_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu", start_index);
    return dataset + "-" + buf;
}

std::vector<Sample> window_samples(const SeriesTable& series, const TaskSpec& task, std::size_t stride) {
    task.validate(series.variable_names);
    if (stride == 0) throw ParameterError("stride must be positive");
    const std::size_t need = task.history_len + task.horizon_len;
    const std::size_t total = series.rows();
    if (total < need) {
        throw InsufficientDataError("series has " + std::to_string(total) + " rows; task '" + task.name +
                                    "' needs at least " + std::to_string(need));
    }
    const std::size_t target = series.column_index(task.target_variable);
    std::vector<Sample> out;
    for (std::size_t start = 0; start + need <= total; start += stride) {
        bool missing = false;
        for (std::size_t r = start; r < start + need && !missing; ++r) {
            for (double v : series.values.row(r)) {
                if (std::isnan(v)) {
                    missing = true;
                    break;
                }
            }
        }
        if (missing) continue;
        Sample s;
        s.id = sample_id(task.name, start);
        s.start_ts = series.timestamps[start];
        s.window = series.values.slice_rows(start, task.history_len);
        s.variable_names = series.variable_names;
        s.timestamps.assign(series.timestamps.begin() + static_cast<std::ptrdiff_t>(start),
                            series.timestamps.begin() + static_cast<std::ptrdiff_t>(start + task.history_len));
        s.label = derive_label(s.window, series.values.slice_rows(start + task.history_len, task.horizon_len), task,
                               target);
        out.push_back(std::move(s));
    }
    if (out.empty()) throw InsufficientDataError("every window contains missing values");
    return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split(std::vector<Sample> samples, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ParameterError("split ratio must lie in (0, 1)");
    std::stable_sort(samples.begin(), samples.end(),
                     [](const Sample& a, const Sample& b) { return a.start_ts < b.start_ts; });
    const double scaled = static_cast<double>(samples.size()) * ratio;
    auto n_base = static_cast<std::size_t>(std::ceil(scaled - 1e-9));
    n_base = std::min(n_base, samples.size());
    std::vector<Sample> query(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_base)),
                              std::make_move_iterator(samples.end()));
    samples.resize(n_base);
    return {std::move(samples), std::move(query)};
}

std::vector<double> label_distribution(const std::vector<Sample>& samples, std::size_t num_classes) {
    std::vector<double> counts(num_classes, 0.0);
    double total = 0;
    for (const auto& s : samples) {
        if (!s.label) continue;
        const auto l = static_cast<std::size_t>(*s.label);
        if (l < num_classes) {
            counts[l] += 1.0;
            total += 1.0;
        }
    }
    if (total > 0) {
        for (auto& c : counts) c /= total;
    }
    return counts;
}

void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        nlohmann::json j = {
            {"id", s.id},
            {"start_ts", format_iso8601(s.start_ts)},
            {"rows", s.window.rows()},
            {"cols", s.window.cols()},
            {"matrix", s.window.data()},
            {"timestamps", s.timestamps},
            {"variables", s.variable_names},
            {"label", s.label ? nlohmann::json(*s.label) : nlohmann::json(nullptr)},
        };
        out += j.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<Sample> load_samples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("sample file not found: " + path.string());
    std::vector<Sample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Sample s;
            s.id = j.at("id").get<std::string>();
            s.start_ts = parse_iso8601(j.at("start_ts").get<std::string>());
            const auto rows = j.at("rows").get<std::size_t>();
            const auto cols = j.at("cols").get<std::size_t>();
            auto data = j.at("matrix").get<std::vector<double>>();
            if (data.size() != rows * cols) throw ParseError("matrix size does not match rows*cols");
            s.window = Matrix(rows, cols, std::move(data));
            s.timestamps = j.at("timestamps").get<std::vector<std::int64_t>>();
            s.variable_names = j.at("variables").get<std::vector<std::string>>();
            if (!j.at("label").is_null()) s.label = j.at("label").get<int>();
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace rationalets
