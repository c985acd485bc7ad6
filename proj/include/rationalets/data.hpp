#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rationalets/matrix.hpp"
#include "rationalets/task.hpp"

namespace rationalets {

enum class TimestampFormat { Iso8601, EpochSeconds };

// Maps a delimiter-separated file onto the variables a task needs.
struct ColumnSchema {
    std::string timestamp_column = "timestamp";
    TimestampFormat timestamp_format = TimestampFormat::Iso8601;
    std::vector<std::string> variables;
    char delimiter = ',';
};

struct SeriesTable {
    std::vector<std::string> variable_names;
    std::vector<std::int64_t> timestamps;  // epoch seconds, strictly increasing
    Matrix values;                         // rows = timestamps, cols = variables; NaN marks a missing cell
    std::int64_t frequency_seconds = 0;

    std::size_t rows() const noexcept { return timestamps.size(); }
    std::size_t column_index(const std::string& name) const;  // throws SchemaError
};

struct Sample {
    std::string id;
    std::int64_t start_ts = 0;
    Matrix window;  // history_len x N
    std::vector<std::string> variable_names;
    std::vector<std::int64_t> timestamps;
    std::optional<int> label;

    friend bool operator==(const Sample&, const Sample&) = default;
};

// "YYYY-MM-DD", "YYYY-MM-DD HH:MM", "YYYY-MM-DDTHH:MM:SS" (optional trailing Z), UTC.
std::int64_t parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t epoch_seconds);

SeriesTable load_dataset(const std::filesystem::path& path, const ColumnSchema& schema);

// Default column layout for the preset tasks' source files.
ColumnSchema default_schema(const TaskSpec& task);

int derive_label(const Matrix& history, const Matrix& horizon, const TaskSpec& task, std::size_t target_col);

// Sliding windows starting at 0, stride, 2*stride, ...; a window is skipped
// when any cell of its history or horizon is missing.
std::vector<Sample> window_samples(const SeriesTable& series, const TaskSpec& task, std::size_t stride);

// Chronological split: the first ceil(D * ratio) samples form the base set.
std::pair<std::vector<Sample>, std::vector<Sample>> split(std::vector<Sample> samples, double ratio);

std::string sample_id(const std::string& dataset, std::size_t start_index);

// Per-class fraction of labeled samples, indexed by label.
std::vector<double> label_distribution(const std::vector<Sample>& samples, std::size_t num_classes);

// One JSON record per line: {id, start_ts, rows, cols, matrix, timestamps, variables, label}.
void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> load_samples(const std::filesystem::path& path);

}  // namespace rationalets
