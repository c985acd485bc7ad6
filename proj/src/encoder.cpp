#include "rationalets/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "rationalets/error.hpp"

namespace rationalets {

TabularMatrix tabularize(const Sample& sample) {
    TabularMatrix t;
    t.values = sample.window;
    t.column_names = sample.variable_names;
    if (t.column_names.size() != t.values.cols()) {
        t.column_names.resize(t.values.cols());
        for (std::size_t c = 0; c < t.column_names.size(); ++c) {
            if (t.column_names[c].empty()) t.column_names[c] = "var" + std::to_string(c);
        }
    }
    return t;
}

namespace {

struct Moments {
    double mean = 0.0;
    double std = 0.0;
};

Moments moments(const std::vector<double>& x) {
    Moments m;
    for (double v : x) m.mean += v;
    m.mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(x.size()));
    return m;
}

double slope(const std::vector<double>& z) {
    const std::size_t n = z.size();
    if (n < 2) return 0.0;
    const double t_mean = static_cast<double>(n - 1) / 2.0;
    double z_mean = 0.0;
    for (double v : z) z_mean += v;
    z_mean /= static_cast<double>(n);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double dt = static_cast<double>(t) - t_mean;
        num += dt * (z[t] - z_mean);
        den += dt * dt;
    }
    return num / den;
}

double lag1_autocorrelation(const std::vector<double>& z) {
    const std::size_t n = z.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(n);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double d = z[t] - mean;
        den += d * d;
        if (t + 1 < n) num += d * (z[t + 1] - mean);
    }
    return den > 0.0 ? num / den : 0.0;
}

}  // namespace

std::vector<double> builtin_temporal_features(const TabularMatrix& matrix) {
    const Matrix& m = matrix.values;
    if (m.rows() == 0 || m.cols() == 0) throw ShapeError("cannot encode an empty matrix");
    for (double v : m.data()) {
        if (!std::isfinite(v)) throw ShapeError("cannot encode a matrix with non-finite values");
    }
    const std::size_t n = m.cols();
    std::vector<std::vector<double>> z(n);
    std::vector<bool> flat(n, false);
    std::vector<double> out;
    out.reserve(builtin_temporal_dim(n));

    for (std::size_t c = 0; c < n; ++c) {
        auto col = m.column(c);
        const Moments mo = moments(col);
        flat[c] = !(mo.std > 0.0);
        for (double& v : col) v = flat[c] ? 0.0 : (v - mo.mean) / mo.std;
        const Moments zm = moments(col);
        const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        out.push_back(zm.mean);
        out.push_back(zm.std);
        out.push_back(*lo);
        out.push_back(*hi);
        out.push_back(col.front());
        out.push_back(col.back());
        out.push_back(slope(col));
        out.push_back(lag1_autocorrelation(col));
        z[c] = std::move(col);
    }
    const double rows = static_cast<double>(m.rows());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (flat[i] || flat[j]) {
                out.push_back(0.0);
                continue;
            }
            double s = 0.0;
            for (std::size_t t = 0; t < m.rows(); ++t) s += z[i][t] * z[j][t];
            out.push_back(std::clamp(s / rows, -1.0, 1.0));
        }
    }
    return out;
}

void l2_normalize(std::vector<double>& v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    if (!(ss > 0.0)) return;
    const double norm = std::sqrt(ss);
    for (double& x : v) x /= norm;
}

EmbeddingVector encode_temporal(const TabularMatrix& matrix, TemporalEncoderKind which, Backend* remote) {
    EmbeddingVector e;
    e.space = EmbeddingSpace::Temporal;
    if (which == TemporalEncoderKind::BuiltinStats) {
        e.values = builtin_temporal_features(matrix);
        e.encoder_id = kBuiltinTemporalEncoderId;
    } else {
        if (remote == nullptr) throw ConfigError("remote temporal encoder needs an http backend");
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < matrix.values.rows(); ++r) {
            const auto row = matrix.values.row(r);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        const auto resp = remote->post_json("/embed", {{"matrix", rows}, {"columns", matrix.column_names}});
        try {
            e.values = resp.at("vector").get<std::vector<double>>();
            e.encoder_id = resp.value("encoder_id", std::string("remote"));
            if (resp.contains("dim") && resp.at("dim").get<std::size_t>() != e.values.size()) {
                throw ShapeError("encoder service reported dim " + resp.at("dim").dump() + " but sent " +
                                 std::to_string(e.values.size()) + " values");
            }
        } catch (const nlohmann::json::exception& ex) {
            throw TransportError(std::string("malformed /embed response: ") + ex.what());
        }
        for (double v : e.values) {
            if (!std::isfinite(v)) throw ShapeError("encoder service returned a non-finite value");
        }
    }
    l2_normalize(e.values);
    return e;
}

EmbeddingVector encode_text(const std::string& text, Backend& backend) {
    if (text.empty()) throw PreconditionError("cannot embed empty text");
    EmbeddingVector e;
    e.space = EmbeddingSpace::Semantic;
    e.values = backend.embed_text(text);
    const auto& cfg = backend.config();
    e.encoder_id = cfg.kind == BackendConfig::Kind::Mock ? "mock-hash-" + std::to_string(cfg.mock_embedding_dim)
                                                          : cfg.embedding_model;
    l2_normalize(e.values);
    return e;
}

}  // namespace rationalets
