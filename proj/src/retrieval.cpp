#include "rationalets/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rationalets/error.hpp"
#include "rationalets/util.hpp"

namespace rationalets {

std::string to_string(RetrievalMode mode) {
    switch (mode) {
        case RetrievalMode::Hybrid: return "hybrid";
        case RetrievalMode::DataOnly: return "data-only";
        case RetrievalMode::SemanticOnly: return "semantic-only";
        case RetrievalMode::Random: return "random";
    }
    return "hybrid";
}

RetrievalMode retrieval_mode_from_string(const std::string& s) {
    if (s == "hybrid") return RetrievalMode::Hybrid;
    if (s == "data-only") return RetrievalMode::DataOnly;
    if (s == "semantic-only") return RetrievalMode::SemanticOnly;
    if (s == "random") return RetrievalMode::Random;
    throw ParameterError("unknown retrieval mode '" + s + "' (hybrid, data-only, semantic-only, random)");
}

double RetrievalParams::effective_lambda() const noexcept {
    if (mode == RetrievalMode::DataOnly) return 1.0;
    if (mode == RetrievalMode::SemanticOnly) return 0.0;
    return lambda;
}

void RetrievalParams::validate() const {
    if (k == 0) throw ParameterError("K must be at least 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0, 1], got " + format_double(lambda));
}

std::vector<std::string> RetrievalSet::ids() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.sample_id);
    return out;
}

namespace {

template <typename A, typename B>
void dot_and_norms(std::span<const A> a, std::span<const B> b, double& dot, double& na, double& nb) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine of vectors with dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    dot = na = nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        const double y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot, na, nb;
    dot_and_norms(a, b, dot, na, nb);
    if (!(na > 0.0) || !(nb > 0.0)) throw PreconditionError("cosine of a zero vector is undefined");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.space != b.space) throw ShapeError("cosine across temporal and semantic spaces");
    return cosine(std::span<const double>(a.values), std::span<const double>(b.values));
}

double cosine_or_zero(std::span<const double> a, std::span<const float> b) {
    double dot, na, nb;
    dot_and_norms(a, b, dot, na, nb);
    if (!(na > 0.0) || !(nb > 0.0)) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

RetrievalSet hybrid_top_k(const std::string& query_id, const std::vector<double>& query_temporal,
                          const std::vector<double>& query_semantic, const std::vector<std::string>& base_ids,
                          const EmbeddingTable& temporal, const EmbeddingTable& semantic,
                          const RetrievalParams& params) {
    params.validate();
    const std::size_t d = base_ids.size();
    if (d == 0) throw StateError("rationale base is empty");
    if (temporal.rows != d || semantic.rows != d) throw ConsistencyError("embedding tables do not match base size");
    if (query_temporal.size() != temporal.dim) {
        throw ShapeError("query temporal dim " + std::to_string(query_temporal.size()) + " != base dim " +
                         std::to_string(temporal.dim));
    }
    if (query_semantic.size() != semantic.dim) {
        throw ShapeError("query semantic dim " + std::to_string(query_semantic.size()) + " != base dim " +
                         std::to_string(semantic.dim));
    }

    std::vector<std::size_t> eligible;
    eligible.reserve(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (params.allow_self_match || base_ids[i] != query_id) eligible.push_back(i);
    }
    if (params.k > eligible.size()) {
        throw ParameterError("K=" + std::to_string(params.k) + " exceeds the " + std::to_string(eligible.size()) +
                             " eligible rationales");
    }

    const double lambda = params.effective_lambda();
    std::vector<ScoredRationale> scored(d);
    for (std::size_t i : eligible) {
        auto& s = scored[i];
        s.index = i;
        s.sample_id = base_ids[i];
        s.sim_b = cosine_or_zero(query_temporal, temporal.row(i));
        s.sim_s = cosine_or_zero(query_semantic, semantic.row(i));
        s.sim_final = lambda * s.sim_b + (1.0 - lambda) * s.sim_s;
    }
    const auto before = [&](std::size_t a, std::size_t b) {
        if (scored[a].sim_final != scored[b].sim_final) return scored[a].sim_final > scored[b].sim_final;
        return a < b;
    };

    std::vector<std::size_t> chosen;
    if (params.mode == RetrievalMode::Random) {
        std::uint64_t state = params.seed ^ fnv1a64(query_id);
        for (std::size_t i = 0; i < params.k; ++i) {
            const auto j = i + uniform_below(state, eligible.size() - i);
            std::swap(eligible[i], eligible[j]);
        }
        chosen.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(params.k));
        std::sort(chosen.begin(), chosen.end(), before);
    } else {
        std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(params.k), eligible.end(),
                          before);
        chosen.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(params.k));
    }

    RetrievalSet out;
    out.query_id = query_id;
    out.params = params;
    for (std::size_t i : chosen) out.entries.push_back(scored[i]);
    return out;
}

RetrievalSet hybrid_top_k(const std::string& query_id, const EmbeddingVector& query_temporal,
                          const EmbeddingVector& query_semantic, const RationaleBase& base,
                          const RetrievalParams& params) {
    if (base.size() == 0) throw StateError("rationale base is empty");
    if (!query_temporal.encoder_id.empty() && !base.manifest.temporal_encoder_id.empty() &&
        query_temporal.encoder_id != base.manifest.temporal_encoder_id) {
        throw ConsistencyError("query temporal encoder '" + query_temporal.encoder_id + "' differs from base encoder '" +
                               base.manifest.temporal_encoder_id + "'");
    }
    if (!query_semantic.encoder_id.empty() && !base.manifest.semantic_encoder_id.empty() &&
        query_semantic.encoder_id != base.manifest.semantic_encoder_id) {
        throw ConsistencyError("query semantic encoder '" + query_semantic.encoder_id + "' differs from base encoder '" +
                               base.manifest.semantic_encoder_id + "'");
    }
    return hybrid_top_k(query_id, query_temporal.values, query_semantic.values, base.ids(), base.temporal,
                        base.semantic, params);
}

double hit_rate(const std::vector<RetrievalSet>& retrievals, const std::map<std::string, int>& base_labels,
                const std::map<std::string, int>& query_labels) {
    if (retrievals.empty()) throw ParameterError("hit rate over zero queries");
    std::size_t hits = 0;
    for (const auto& set : retrievals) {
        const auto q = query_labels.find(set.query_id);
        if (q == query_labels.end()) throw ConsistencyError("no label for query '" + set.query_id + "'");
        bool hit = false;
        for (const auto& e : set.entries) {
            const auto b = base_labels.find(e.sample_id);
            if (b == base_labels.end()) throw ConsistencyError("retrieved id '" + e.sample_id + "' not in base");
            hit = hit || b->second == q->second;
        }
        hits += hit ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(retrievals.size());
}

nlohmann::json audit_entry(const RetrievalSet& set) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : set.entries) {
        entries.push_back({{"id", e.sample_id}, {"sim_b", e.sim_b}, {"sim_s", e.sim_s}, {"sim_final", e.sim_final}});
    }
    return {{"query_id", set.query_id},
            {"K", set.params.k},
            {"lambda", set.params.effective_lambda()},
            {"mode", to_string(set.params.mode)},
            {"entries", entries}};
}

}  // namespace rationalets
