#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "musim/error.hpp"
#include "musim/prng.hpp"

namespace musim {

/// exp(x) as pure float arithmetic: Cody-Waite range reduction against ln 2
/// followed by a degree-6 Taylor polynomial and an exact power-of-two scale.
/// No libm transcendentals, so results are identical on every platform.
/// Relative error is below 2e-7 over the float range.
inline float det_expf(float x) {
    if (x < -87.33655f) return 0.0f;
    if (x > 88.72283f) return std::numeric_limits<float>::infinity();
    const float inv_ln2 = 1.44269504f;
    const float ln2_hi = 0.693359375f;
    const float ln2_lo = -2.12194440e-4f;
    const float kf = std::floor(x * inv_ln2 + 0.5f);
    const int k = static_cast<int>(kf);
    const float r = (x - kf * ln2_hi) - kf * ln2_lo;
    const float p =
        1.0f + r * (1.0f + r * (0.5f + r * (0.16666667f +
                    r * (0.041666668f + r * (0.008333334f + r * 0.0013888889f)))));
    return std::ldexp(p, k);
}

struct ModelShape {
    std::uint32_t layers = 12;       // L
    std::uint32_t max_context = 1024;  // T
    std::uint32_t hidden = 512;      // H
    std::uint32_t vocab = 2000;      // V
    std::uint32_t heads = 8;

    std::uint32_t ff_hidden() const { return 4 * hidden; }

    void validate() const {
        if (!layers || !max_context || !hidden || !vocab || !heads)
            throw Error(Errc::bad_config, "model shape fields must be positive");
        if (hidden % heads != 0)
            throw Error(Errc::bad_config, "hidden size must be divisible by head count");
    }

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Per-layer hidden states h[layer][position][dim] for one sequence.
/// Layer l holds the residual stream after block l; by default the last
/// layer is stored after the final layer norm (see ForwardOptions).
struct LayerActivations {
    std::uint32_t layers = 0;
    std::uint32_t max_context = 0;
    std::uint32_t seq_len = 0;
    std::uint32_t hidden = 0;
    std::vector<float> data;  // layers * seq_len * hidden

    float at(std::uint32_t layer, std::uint32_t pos, std::uint32_t dim) const {
        return data[(static_cast<std::size_t>(layer) * seq_len + pos) * hidden + dim];
    }
    float& at(std::uint32_t layer, std::uint32_t pos, std::uint32_t dim) {
        return data[(static_cast<std::size_t>(layer) * seq_len + pos) * hidden + dim];
    }
};

/// Decoder-only pre-LN weights. Projection matrices are row-major
/// [input][output]; attention projections carry no bias, the two
/// feed-forward matrices do.
struct ModelWeights {
    struct Layer {
        std::vector<float> ln1_gain, ln1_bias;
        std::vector<float> wq, wk, wv, wo;  // H x H each
        std::vector<float> ln2_gain, ln2_bias;
        std::vector<float> w1, b1;  // H x 4H, 4H
        std::vector<float> w2, b2;  // 4H x H, H
    };
    ModelShape shape;
    std::vector<float> token_embedding;     // V x H
    std::vector<float> position_embedding;  // T x H
    std::vector<Layer> layers;
    std::vector<float> final_ln_gain, final_ln_bias;
};

/// Gaussian init, std 0.02, from the library PRNG; biases start at zero and
/// layer-norm gains at one. Tensors are filled in serialization order so a
/// seed pins the whole parameter set.
inline ModelWeights random_weights(const ModelShape& shape, std::uint64_t seed) {
    shape.validate();
    Rng rng(seed);
    auto gauss = [&](std::vector<float>& v, std::size_t count) {
        v.resize(count);
        for (auto& x : v) x = static_cast<float>(rng.gaussian() * 0.02);
    };
    auto fill = [](std::vector<float>& v, std::size_t count, float value) {
        v.assign(count, value);
    };
    const std::size_t H = shape.hidden, F = shape.ff_hidden();
    ModelWeights w;
    w.shape = shape;
    gauss(w.token_embedding, static_cast<std::size_t>(shape.vocab) * H);
    gauss(w.position_embedding, static_cast<std::size_t>(shape.max_context) * H);
    w.layers.resize(shape.layers);
    for (auto& layer : w.layers) {
        fill(layer.ln1_gain, H, 1.0f);
        fill(layer.ln1_bias, H, 0.0f);
        gauss(layer.wq, H * H);
        gauss(layer.wk, H * H);
        gauss(layer.wv, H * H);
        gauss(layer.wo, H * H);
        fill(layer.ln2_gain, H, 1.0f);
        fill(layer.ln2_bias, H, 0.0f);
        gauss(layer.w1, H * F);
        fill(layer.b1, F, 0.0f);
        gauss(layer.w2, F * H);
        fill(layer.b2, H, 0.0f);
    }
    fill(w.final_ln_gain, H, 1.0f);
    fill(w.final_ln_bias, H, 0.0f);
    return w;
}

struct ForwardOptions {
    /// Store the last layer after the final layer norm (the default) or as
    /// the raw block-L residual stream like every other layer.
    bool final_norm_on_last_layer = true;
};

namespace model_detail {

constexpr float kLnEps = 1e-5f;

inline void layer_norm(const float* x, const float* gain, const float* bias, std::uint32_t H,
                       float* out) {
    float mean = 0.0f;
    for (std::uint32_t d = 0; d < H; ++d) mean += x[d];
    mean /= static_cast<float>(H);
    float var = 0.0f;
    for (std::uint32_t d = 0; d < H; ++d) {
        const float c = x[d] - mean;
        var += c * c;
    }
    var /= static_cast<float>(H);
    const float inv = 1.0f / std::sqrt(var + kLnEps);
    for (std::uint32_t d = 0; d < H; ++d) out[d] = (x[d] - mean) * inv * gain[d] + bias[d];
}

// y[o] = sum_in x[in] * w[in][out], sequential over inputs
inline void matvec(const float* x, const float* w, std::uint32_t in_dim, std::uint32_t out_dim,
                   float* y) {
    for (std::uint32_t o = 0; o < out_dim; ++o) {
        float acc = 0.0f;
        for (std::uint32_t i = 0; i < in_dim; ++i) acc += x[i] * w[static_cast<std::size_t>(i) * out_dim + o];
        y[o] = acc;
    }
}

}  // namespace model_detail

/// Causal decoder forward pass recording every layer's hidden states.
/// Single-threaded with a fixed summation order: the same weights and ids
/// produce bit-identical activations on every run.
inline LayerActivations forward(std::span<const std::uint32_t> ids, const ModelWeights& w,
                                const ForwardOptions& opts = {}) {
    using namespace model_detail;
    const ModelShape& shape = w.shape;
    shape.validate();
    const auto n = static_cast<std::uint32_t>(ids.size());
    if (n == 0) throw Error(Errc::empty_sequence, "forward pass needs at least one token");
    if (n > shape.max_context)
        throw Error(Errc::sequence_too_long, "sequence length " + std::to_string(n) +
                                                 " exceeds max context " +
                                                 std::to_string(shape.max_context));
    for (auto id : ids)
        if (id >= shape.vocab)
            throw Error(Errc::id_out_of_range, "token id " + std::to_string(id) +
                                                   " outside vocabulary of " +
                                                   std::to_string(shape.vocab));

    const std::uint32_t H = shape.hidden, F = shape.ff_hidden();
    const std::uint32_t head_dim = H / shape.heads;
    const float attn_scale = 1.0f / std::sqrt(static_cast<float>(head_dim));

    LayerActivations acts;
    acts.layers = shape.layers;
    acts.max_context = shape.max_context;
    acts.seq_len = n;
    acts.hidden = H;
    acts.data.resize(static_cast<std::size_t>(shape.layers) * n * H);

    std::vector<float> x(static_cast<std::size_t>(n) * H);
    for (std::uint32_t t = 0; t < n; ++t)
        for (std::uint32_t d = 0; d < H; ++d)
            x[static_cast<std::size_t>(t) * H + d] =
                w.token_embedding[static_cast<std::size_t>(ids[t]) * H + d] +
                w.position_embedding[static_cast<std::size_t>(t) * H + d];

    std::vector<float> normed(static_cast<std::size_t>(n) * H);
    std::vector<float> q(static_cast<std::size_t>(n) * H), k(q), v(q), attn(q);
    std::vector<float> scores(n), weights(n), proj(H), ff(F);

    for (std::uint32_t l = 0; l < shape.layers; ++l) {
        const auto& lw = w.layers[l];
        for (std::uint32_t t = 0; t < n; ++t)
            layer_norm(&x[static_cast<std::size_t>(t) * H], lw.ln1_gain.data(), lw.ln1_bias.data(),
                       H, &normed[static_cast<std::size_t>(t) * H]);
        for (std::uint32_t t = 0; t < n; ++t) {
            const float* row = &normed[static_cast<std::size_t>(t) * H];
            matvec(row, lw.wq.data(), H, H, &q[static_cast<std::size_t>(t) * H]);
            matvec(row, lw.wk.data(), H, H, &k[static_cast<std::size_t>(t) * H]);
            matvec(row, lw.wv.data(), H, H, &v[static_cast<std::size_t>(t) * H]);
        }
        for (std::uint32_t h = 0; h < shape.heads; ++h) {
            const std::uint32_t off = h * head_dim;
            for (std::uint32_t i = 0; i < n; ++i) {
                float max_score = -std::numeric_limits<float>::infinity();
                for (std::uint32_t j = 0; j <= i; ++j) {
                    float s = 0.0f;
                    const float* qi = &q[static_cast<std::size_t>(i) * H + off];
                    const float* kj = &k[static_cast<std::size_t>(j) * H + off];
                    for (std::uint32_t d = 0; d < head_dim; ++d) s += qi[d] * kj[d];
                    s *= attn_scale;
                    scores[j] = s;
                    if (s > max_score) max_score = s;
                }
                float denom = 0.0f;
                for (std::uint32_t j = 0; j <= i; ++j) {
                    weights[j] = det_expf(scores[j] - max_score);
                    denom += weights[j];
                }
                for (std::uint32_t d = 0; d < head_dim; ++d) {
                    float acc = 0.0f;
                    for (std::uint32_t j = 0; j <= i; ++j)
                        acc += (weights[j] / denom) * v[static_cast<std::size_t>(j) * H + off + d];
                    attn[static_cast<std::size_t>(i) * H + off + d] = acc;
                }
            }
        }
        for (std::uint32_t t = 0; t < n; ++t) {
            matvec(&attn[static_cast<std::size_t>(t) * H], lw.wo.data(), H, H, proj.data());
            for (std::uint32_t d = 0; d < H; ++d) x[static_cast<std::size_t>(t) * H + d] += proj[d];
        }
        for (std::uint32_t t = 0; t < n; ++t) {
            float* row = &x[static_cast<std::size_t>(t) * H];
            layer_norm(row, lw.ln2_gain.data(), lw.ln2_bias.data(), H,
                       &normed[static_cast<std::size_t>(t) * H]);
            const float* nrow = &normed[static_cast<std::size_t>(t) * H];
            for (std::uint32_t o = 0; o < F; ++o) {
                float acc = lw.b1[o];
                for (std::uint32_t i = 0; i < H; ++i)
                    acc += nrow[i] * lw.w1[static_cast<std::size_t>(i) * F + o];
                ff[o] = acc > 0.0f ? acc : 0.0f;  // ReLU
            }
            for (std::uint32_t o = 0; o < H; ++o) {
                float acc = lw.b2[o];
                for (std::uint32_t i = 0; i < F; ++i)
                    acc += ff[i] * lw.w2[static_cast<std::size_t>(i) * H + o];
                row[o] += acc;
            }
        }
        for (std::uint32_t t = 0; t < n; ++t)
            for (std::uint32_t d = 0; d < H; ++d)
                acts.at(l, t, d) = x[static_cast<std::size_t>(t) * H + d];
    }

    if (opts.final_norm_on_last_layer) {
        for (std::uint32_t t = 0; t < n; ++t) {
            layer_norm(&x[static_cast<std::size_t>(t) * H], w.final_ln_gain.data(),
                       w.final_ln_bias.data(), H, proj.data());
            for (std::uint32_t d = 0; d < H; ++d) acts.at(shape.layers - 1, t, d) = proj[d];
        }
    }
    return acts;
}

}  // namespace musim
