#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "musim/error.hpp"
#include "musim/linalg.hpp"
#include "musim/model.hpp"

namespace musim {

// Sentence-embedding calibration: position-weighted pooling, averaging over
// the last layers, per-dimension standard normalization, and removal of the
// leading principal directions of the embedding set.

enum class Weighting : std::uint8_t { uniform, linear, inverse_linear };

inline const char* weighting_name(Weighting w) {
    switch (w) {
        case Weighting::uniform: return "uniform";
        case Weighting::linear: return "linear";
        case Weighting::inverse_linear: return "inverse_linear";
    }
    return "?";
}

inline Weighting weighting_from_name(const std::string& name) {
    if (name == "uniform") return Weighting::uniform;
    if (name == "linear") return Weighting::linear;
    if (name == "inverse_linear") return Weighting::inverse_linear;
    throw Error(Errc::bad_config, "unknown weighting '" + name + "'");
}

/// One grid point. layer_avg = 0 selects the last-token baseline (no
/// pooling, so only uniform weighting is meaningful there).
struct CalibrationConfig {
    int layer_avg = 1;   // 0..L
    bool sn = false;
    int natsv_k = 0;     // >= 0
    Weighting weighting = Weighting::uniform;

    void validate(std::uint32_t model_layers) const {
        if (layer_avg < 0 || static_cast<std::uint32_t>(layer_avg) > model_layers)
            throw Error(Errc::layer_out_of_range,
                        "layer_avg " + std::to_string(layer_avg) + " with " +
                            std::to_string(model_layers) + " layers");
        if (natsv_k < 0) throw Error(Errc::bad_config, "natsv_k must be non-negative");
        if (layer_avg == 0 && weighting != Weighting::uniform)
            throw Error(Errc::bad_config, "layer_avg 0 pools nothing; weighting must be uniform");
    }

    friend bool operator==(const CalibrationConfig&, const CalibrationConfig&) = default;
};

struct SentenceEmbedding {
    std::vector<double> vector;
    CalibrationConfig config;
    std::string piece_id;
    std::uint32_t window_index = 0;
};

struct NormalizationStats {
    std::vector<double> mu;
    std::vector<double> sigma;  // clamped below at kSigmaFloor
};

inline constexpr double kSigmaFloor = 1e-8;

struct PrincipalDirections {
    std::vector<double> mean;
    std::vector<std::vector<double>> components;  // orthonormal, descending singular value
};

/// Normalized pooling weights for a sequence of length n (1-based position
/// index t in the formulas): uniform 1/n, linear t / sum(t), inverse-linear
/// (n - t + 1) / sum(t).
inline std::vector<double> position_weights(Weighting weighting, std::size_t n) {
    if (n == 0) throw Error(Errc::empty_sequence, "no positions to weight");
    std::vector<double> w(n);
    double denom = 0.0;
    for (std::size_t t = 1; t <= n; ++t) denom += static_cast<double>(t);
    for (std::size_t t = 1; t <= n; ++t) {
        switch (weighting) {
            case Weighting::uniform: w[t - 1] = 1.0 / static_cast<double>(n); break;
            case Weighting::linear: w[t - 1] = static_cast<double>(t) / denom; break;
            case Weighting::inverse_linear:
                w[t - 1] = static_cast<double>(n - t + 1) / denom;
                break;
        }
    }
    return w;
}

/// Pool one layer across positions. Accumulation is sequential over
/// ascending positions in double precision; the uniform mode is the plain
/// mean, so independent re-computation in that order matches bit for bit.
inline std::vector<double> pool_layer(const LayerActivations& acts, std::uint32_t layer,
                                      Weighting weighting) {
    if (layer >= acts.layers)
        throw Error(Errc::layer_out_of_range, "layer " + std::to_string(layer) + " of " +
                                                  std::to_string(acts.layers));
    const std::uint32_t n = acts.seq_len;
    if (n == 0) throw Error(Errc::empty_sequence, "cannot pool an empty sequence");
    std::vector<double> out(acts.hidden, 0.0);
    double denom;
    if (weighting == Weighting::uniform) {
        for (std::uint32_t t = 0; t < n; ++t)
            for (std::uint32_t d = 0; d < acts.hidden; ++d)
                out[d] += static_cast<double>(acts.at(layer, t, d));
        denom = static_cast<double>(n);
    } else {
        denom = 0.0;
        for (std::uint32_t t = 0; t < n; ++t) {
            const double weight =
                weighting == Weighting::linear ? static_cast<double>(t + 1)
                                               : static_cast<double>(n - t);
            denom += static_cast<double>(t + 1);  // sum of t is the denominator in both modes
            for (std::uint32_t d = 0; d < acts.hidden; ++d)
                out[d] += weight * static_cast<double>(acts.at(layer, t, d));
        }
    }
    for (auto& x : out) x /= denom;
    return out;
}

/// Pre-calibration sentence embedding: layer_avg = 0 returns the last
/// layer's last-position vector; layer_avg >= 1 averages the pooled last
/// `layer_avg` layers.
inline std::vector<double> raw_embedding(const LayerActivations& acts, int layer_avg,
                                         Weighting weighting) {
    if (layer_avg < 0 || static_cast<std::uint32_t>(layer_avg) > acts.layers)
        throw Error(Errc::layer_out_of_range, "layer_avg " + std::to_string(layer_avg) + " with " +
                                                  std::to_string(acts.layers) + " layers");
    if (acts.seq_len == 0) throw Error(Errc::empty_sequence, "no positions");
    if (layer_avg == 0) {
        std::vector<double> out(acts.hidden);
        for (std::uint32_t d = 0; d < acts.hidden; ++d)
            out[d] = static_cast<double>(acts.at(acts.layers - 1, acts.seq_len - 1, d));
        return out;
    }
    std::vector<double> out(acts.hidden, 0.0);
    for (std::uint32_t l = acts.layers - static_cast<std::uint32_t>(layer_avg); l < acts.layers; ++l) {
        const std::vector<double> pooled = pool_layer(acts, l, weighting);
        for (std::uint32_t d = 0; d < acts.hidden; ++d) out[d] += pooled[d];
    }
    for (auto& x : out) x /= static_cast<double>(layer_avg);
    return out;
}

namespace calib_detail {

inline void check_same_dim(const std::vector<std::vector<double>>& embeddings) {
    for (const auto& e : embeddings)
        if (e.size() != embeddings.front().size())
            throw Error(Errc::dimension_mismatch, "embeddings differ in dimension");
}

}  // namespace calib_detail

/// Per-dimension mean and population standard deviation of the embedding
/// set. Degenerate dimensions are clamped to kSigmaFloor.
inline NormalizationStats fit_sn(const std::vector<std::vector<double>>& embeddings) {
    if (embeddings.size() < 2)
        throw Error(Errc::too_few_embeddings, "standard normalization needs at least 2 embeddings");
    calib_detail::check_same_dim(embeddings);
    const std::size_t dim = embeddings.front().size();
    const double count = static_cast<double>(embeddings.size());
    NormalizationStats stats;
    stats.mu.assign(dim, 0.0);
    stats.sigma.assign(dim, 0.0);
    for (const auto& e : embeddings)
        for (std::size_t d = 0; d < dim; ++d) stats.mu[d] += e[d];
    for (auto& m : stats.mu) m /= count;
    for (const auto& e : embeddings)
        for (std::size_t d = 0; d < dim; ++d) {
            const double c = e[d] - stats.mu[d];
            stats.sigma[d] += c * c;
        }
    for (auto& s : stats.sigma) s = std::max(std::sqrt(s / count), kSigmaFloor);
    return stats;
}

inline std::vector<double> apply_sn(const std::vector<double>& v, const NormalizationStats& stats) {
    if (v.size() != stats.mu.size())
        throw Error(Errc::dimension_mismatch, "vector dimension " + std::to_string(v.size()) +
                                                  " vs stats dimension " +
                                                  std::to_string(stats.mu.size()));
    std::vector<double> out(v.size());
    for (std::size_t d = 0; d < v.size(); ++d) out[d] = (v[d] - stats.mu[d]) / stats.sigma[d];
    return out;
}

/// Top-k principal directions of the mean-centered embedding set, from a
/// Jacobi eigendecomposition of the covariance. Component signs are fixed
/// so the first non-negligible entry is positive. If k exceeds the
/// numerical rank, the available components are returned and a warning is
/// recorded.
inline PrincipalDirections fit_natsv(const std::vector<std::vector<double>>& embeddings, int k,
                                     WarningSink* warnings = nullptr) {
    if (embeddings.empty())
        throw Error(Errc::too_few_embeddings, "cannot fit principal directions on an empty set");
    if (k < 0) throw Error(Errc::bad_config, "natsv_k must be non-negative");
    calib_detail::check_same_dim(embeddings);
    const std::size_t dim = embeddings.front().size();
    const double count = static_cast<double>(embeddings.size());

    PrincipalDirections dirs;
    dirs.mean.assign(dim, 0.0);
    for (const auto& e : embeddings)
        for (std::size_t d = 0; d < dim; ++d) dirs.mean[d] += e[d];
    for (auto& m : dirs.mean) m /= count;
    if (k == 0) return dirs;

    std::vector<double> cov(dim * dim, 0.0);
    std::vector<double> centered(dim);
    for (const auto& e : embeddings) {
        for (std::size_t d = 0; d < dim; ++d) centered[d] = e[d] - dirs.mean[d];
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = i; j < dim; ++j) cov[i * dim + j] += centered[i] * centered[j];
    }
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < i; ++j) cov[i * dim + j] = cov[j * dim + i];
    for (auto& c : cov) c /= count;

    SymmetricEigen eigen = jacobi_eigen(std::move(cov), dim);
    const double rank_tol = eigen.values.empty() ? 0.0 : std::max(eigen.values.front(), 0.0) * 1e-10;
    int available = 0;
    for (double v : eigen.values)
        if (v > rank_tol && v > 1e-14) ++available;

    const int take = std::min(k, available);
    if (take < k)
        warn(warnings, "rank too low: requested " + std::to_string(k) +
                           " principal directions, only " + std::to_string(take) + " available");
    for (int i = 0; i < take; ++i) {
        std::vector<double> u = eigen.vectors[static_cast<std::size_t>(i)];
        for (double x : u) {
            if (std::abs(x) > 1e-12) {
                if (x < 0.0)
                    for (auto& y : u) y = -y;
                break;
            }
        }
        dirs.components.push_back(std::move(u));
    }
    return dirs;
}

/// Remove the fitted mean and the projections on every stored component:
/// w = v - mean; w -= sum_i (u_i . w) u_i. Pass center = false to keep the
/// mean and only null the component projections.
inline std::vector<double> apply_natsv(const std::vector<double>& v,
                                       const PrincipalDirections& dirs, bool center = true) {
    if (v.size() != dirs.mean.size())
        throw Error(Errc::dimension_mismatch, "vector dimension " + std::to_string(v.size()) +
                                                  " vs directions dimension " +
                                                  std::to_string(dirs.mean.size()));
    std::vector<double> w(v.size());
    for (std::size_t d = 0; d < v.size(); ++d) w[d] = center ? v[d] - dirs.mean[d] : v[d];
    for (const auto& u : dirs.components) {
        const double proj = dot(u, w);
        for (std::size_t d = 0; d < w.size(); ++d) w[d] -= proj * u[d];
    }
    return w;
}

/// Full calibration pipeline for one window: raw embedding, then standard
/// normalization when configured, then principal-direction removal when
/// configured. Statistics must be fitted on the evaluation embedding set
/// for the same (layer_avg, weighting); with both stages on, directions are
/// fitted on the normalized set.
inline SentenceEmbedding calibrate(const LayerActivations& acts, const CalibrationConfig& config,
                                   const NormalizationStats* stats = nullptr,
                                   const PrincipalDirections* dirs = nullptr) {
    config.validate(acts.layers);
    std::vector<double> v = raw_embedding(acts, config.layer_avg, config.weighting);
    if (config.sn) {
        if (!stats) throw Error(Errc::missing_stats, "config has sn=true but no fitted stats");
        v = apply_sn(v, *stats);
    }
    if (config.natsv_k > 0) {
        if (!dirs)
            throw Error(Errc::missing_directions, "config has natsv_k > 0 but no fitted directions");
        v = apply_natsv(v, *dirs);
    }
    SentenceEmbedding out;
    out.vector = std::move(v);
    out.config = config;
    return out;
}

}  // namespace musim
