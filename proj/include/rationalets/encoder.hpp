#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rationalets/backend.hpp"
#include "rationalets/data.hpp"

namespace rationalets {

enum class EmbeddingSpace { Temporal, Semantic };

struct EmbeddingVector {
    std::vector<double> values;
    EmbeddingSpace space = EmbeddingSpace::Temporal;
    std::string encoder_id;

    std::size_t dim() const noexcept { return values.size(); }
};

// A window laid out as a table: one row per time step, one column per variable.
struct TabularMatrix {
    Matrix values;
    std::vector<std::string> column_names;
};

TabularMatrix tabularize(const Sample& sample);

enum class TemporalEncoderKind { BuiltinStats, RemoteService };

inline constexpr const char* kBuiltinTemporalEncoderId = "builtin-stats-v1";

// 8 statistics per variable plus the upper triangle of the correlation matrix.
constexpr std::size_t builtin_temporal_dim(std::size_t n_vars) { return 8 * n_vars + n_vars * (n_vars - 1) / 2; }

// Raw (unnormalized) builtin features. Each variable is z-normalized first,
// then summarized by {mean, std, min, max, first, last, slope, lag-1
// autocorrelation}; the Pearson correlations of all variable pairs (i < j,
// row-major) follow. Zero-variance variables yield 0 for every entry that
// would divide by their variance.
std::vector<double> builtin_temporal_features(const TabularMatrix& matrix);

// In-place L2 normalization; an all-zero vector is left unchanged.
void l2_normalize(std::vector<double>& v);

// `remote` is required for RemoteService: POST {matrix, columns} to `/embed`.
EmbeddingVector encode_temporal(const TabularMatrix& matrix, TemporalEncoderKind which, Backend* remote = nullptr);

EmbeddingVector encode_text(const std::string& text, Backend& backend);

}  // namespace rationalets
