#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rationalets/encoder.hpp"
#include "rationalets/rationale_base.hpp"

namespace rationalets {

struct ScoredRationale {
    std::size_t index = 0;  // row in the base
    std::string sample_id;
    double sim_b = 0.0;
    double sim_s = 0.0;
    double sim_final = 0.0;

    friend bool operator==(const ScoredRationale&, const ScoredRationale&) = default;
};

enum class RetrievalMode { Hybrid, DataOnly, SemanticOnly, Random };

std::string to_string(RetrievalMode mode);
RetrievalMode retrieval_mode_from_string(const std::string& s);  // throws ParameterError

struct RetrievalParams {
    std::size_t k = 5;
    double lambda = 0.8;
    RetrievalMode mode = RetrievalMode::Hybrid;
    std::uint64_t seed = 0;
    bool allow_self_match = false;

    // Weight actually applied: 1 for DataOnly, 0 for SemanticOnly.
    double effective_lambda() const noexcept;
    void validate() const;  // throws ParameterError
};

struct RetrievalSet {
    std::string query_id;
    std::vector<ScoredRationale> entries;  // sim_final desc, then index asc
    RetrievalParams params;

    std::vector<std::string> ids() const;
    friend bool operator==(const RetrievalSet& a, const RetrievalSet& b) {
        return a.query_id == b.query_id && a.entries == b.entries;
    }
};

// Cosine clamped to [-1, 1]. Throws ShapeError on a dimension mismatch and
// PreconditionError when either vector has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// Cosine that scores a zero-norm side as 0 instead of throwing. Constant
// windows encode to the zero vector and must stay retrievable.
double cosine_or_zero(std::span<const double> a, std::span<const float> b);

// Scores every base row, fuses, and keeps the top K. Rows whose id equals
// query_id are skipped unless params.allow_self_match.
//   errors: empty base -> StateError; K == 0 or K > eligible rows ->
//   ParameterError; dimension mismatch -> ShapeError.
RetrievalSet hybrid_top_k(const std::string& query_id, const std::vector<double>& query_temporal,
                          const std::vector<double>& query_semantic, const std::vector<std::string>& base_ids,
                          const EmbeddingTable& temporal, const EmbeddingTable& semantic,
                          const RetrievalParams& params);

RetrievalSet hybrid_top_k(const std::string& query_id, const EmbeddingVector& query_temporal,
                          const EmbeddingVector& query_semantic, const RationaleBase& base,
                          const RetrievalParams& params);

// Fraction of retrieval sets holding at least one entry whose base label
// equals the query label. Throws ConsistencyError on an unknown id.
double hit_rate(const std::vector<RetrievalSet>& retrievals, const std::map<std::string, int>& base_labels,
                const std::map<std::string, int>& query_labels);

// {query_id, K, lambda, entries:[{id, sim_b, sim_s, sim_final}]}
nlohmann::json audit_entry(const RetrievalSet& set);

}  // namespace rationalets
