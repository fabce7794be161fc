// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qbye/mat.hpp"
#include "qbye/rng.hpp"

namespace qbye {

// Encoder: n stacked blocks, each a feature-mixing MLP over the coefficient
// axis followed by a time-mixing MLP over the frame axis, both with a
// pre-LayerNorm and a residual connection:
//
//   U = X + W2 act(W1 LN_col(X) + b1) + b2        (per column, length f)
//   Y = U + (W4 act(W3 LN_row(U^T) + b3) + b4)^T  (per row, length t)
//
// followed by average pooling over time into an f-dim embedding.

enum class Activation { kHardswish, kGelu, kRelu, kSilu };
enum class InputMode { kDirect, kPatchEmbed, kPatchReshape };

constexpr double kLayerNormEps = 1e-5;

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);
const char* input_mode_name(InputMode m);
InputMode input_mode_from_name(const std::string& name);

struct MixerConfig {
    int feature_dim = 81;   // f
    int time_dim = 81;      // t
    int feature_hidden = 64; // h
    int time_hidden = 64;    // g
    int num_blocks = 12;     // n
    Activation activation = Activation::kHardswish;
    float dropout = 0.0f;
    InputMode input_mode = InputMode::kDirect;
    int patch_size = 9;
    int num_classes = 0; // 0 = inference-only, no decoder

    void validate() const {
        if (feature_dim < 1 || time_dim < 1 || feature_hidden < 1 || time_hidden < 1)
            throw std::runtime_error("mixer config: dimensions must be >= 1");
        if (num_blocks < 0) throw std::runtime_error("mixer config: num_blocks must be >= 0");
        if (dropout < 0.0f || dropout >= 1.0f)
            throw std::runtime_error("mixer config: dropout must be in [0, 1)");
        if (input_mode != InputMode::kDirect) {
            // patchified input keeps the f x t shape, which needs f == t == patch^2
            if (patch_size < 1 || feature_dim != patch_size * patch_size ||
                time_dim != patch_size * patch_size)
                throw std::runtime_error(
                    "mixer config: patch input requires feature_dim == time_dim == patch_size^2");
        }
        if (num_classes < 0) throw std::runtime_error("mixer config: num_classes must be >= 0");
    }
};

template <typename T>
struct BlockParams {
    Mat<T> w1;              // h x f
    std::vector<T> b1;      // h
    Mat<T> w2;              // f x h
    std::vector<T> b2;      // f
    Mat<T> w3;              // g x t
    std::vector<T> b3;      // g
    Mat<T> w4;              // t x g
    std::vector<T> b4;      // t
    std::vector<T> ln_f_gamma, ln_f_beta; // f
    std::vector<T> ln_t_gamma, ln_t_beta; // t
};

template <typename T>
struct MixerParams {
    std::vector<BlockParams<T>> blocks;
    Mat<T> patch_w;              // f x patch^2, only for kPatchEmbed
    std::vector<T> patch_b;      // f
    Mat<T> decoder_w;            // num_classes x f, training artifacts only
    std::vector<T> decoder_b;    // num_classes

    bool has_patch_embed() const { return patch_w.rows > 0; }
    bool has_decoder() const { return decoder_w.rows > 0; }

    template <typename U>
    MixerParams<U> cast() const {
        MixerParams<U> out;
        auto cv = [](const std::vector<T>& v) {
            std::vector<U> r(v.size());
            for (size_t j = 0; j < v.size(); ++j) r[j] = static_cast<U>(v[j]);
            return r;
        };
        out.blocks.resize(blocks.size());
        for (size_t i = 0; i < blocks.size(); ++i) {
            const auto& b = blocks[i];
            auto& o = out.blocks[i];
            o.w1 = b.w1.template cast<U>();
            o.w2 = b.w2.template cast<U>();
            o.w3 = b.w3.template cast<U>();
            o.w4 = b.w4.template cast<U>();
            o.b1 = cv(b.b1); o.b2 = cv(b.b2); o.b3 = cv(b.b3); o.b4 = cv(b.b4);
            o.ln_f_gamma = cv(b.ln_f_gamma); o.ln_f_beta = cv(b.ln_f_beta);
            o.ln_t_gamma = cv(b.ln_t_gamma); o.ln_t_beta = cv(b.ln_t_beta);
        }
        out.patch_w = patch_w.template cast<U>();
        out.patch_b = cv(patch_b);
        out.decoder_w = decoder_w.template cast<U>();
        out.decoder_b = cv(decoder_b);
        return out;
    }
};

// Gradients share the parameter tree layout.
template <typename T>
using Gradients = MixerParams<T>;

using Embedding = std::vector<float>;

// ---------------------------------------------------------------------------
// elementwise pieces

template <typename T>
inline T activate(T x, Activation kind) {
    switch (kind) {
        case Activation::kHardswish: {
            T r = x + T(3);
            if (r < T(0)) r = T(0);
            if (r > T(6)) r = T(6);
            return x * r / T(6);
        }
        case Activation::kRelu:
            return x > T(0) ? x : T(0);
        case Activation::kSilu:
            return x / (T(1) + std::exp(-x));
        case Activation::kGelu:
            return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
    }
    return x;
}

// Exact derivative; kink values pinned (hardswish: -3 -> 0, 3 -> 1).
template <typename T>
inline T activate_grad(T x, Activation kind) {
    switch (kind) {
        case Activation::kHardswish:
            if (x <= T(-3)) return T(0);
            if (x >= T(3)) return T(1);
            return x / T(3) + T(0.5);
        case Activation::kRelu:
            return x > T(0) ? T(1) : T(0);
        case Activation::kSilu: {
            T s = T(1) / (T(1) + std::exp(-x));
            return s * (T(1) + x * (T(1) - s));
        }
        case Activation::kGelu: {
            T phi = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
            T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
            return cdf + x * phi;
        }
    }
    return T(1);
}

// y = gamma * (x - mu) / sqrt(var + eps) + beta over the d entries.
// Optionally writes the normalized vector and 1/sqrt(var+eps) for backprop.
template <typename T>
inline void layer_norm(const T* x, int d, const T* gamma, const T* beta, T eps, T* y,
                       T* xhat_out = nullptr, T* inv_std_out = nullptr) {
    T mu = T(0);
    for (int i = 0; i < d; ++i) mu += x[i];
    mu /= T(d);
    T var = T(0);
    for (int i = 0; i < d; ++i) {
        T dv = x[i] - mu;
        var += dv * dv;
    }
    var /= T(d);
    T inv = T(1) / std::sqrt(var + eps);
    for (int i = 0; i < d; ++i) {
        T xh = (x[i] - mu) * inv;
        if (xhat_out) xhat_out[i] = xh;
        y[i] = gamma[i] * xh + beta[i];
    }
    if (inv_std_out) *inv_std_out = inv;
}

template <typename T>
inline std::vector<T> layer_norm(const std::vector<T>& x, const std::vector<T>& gamma,
                                 const std::vector<T>& beta, T eps) {
    std::vector<T> y(x.size());
    layer_norm(x.data(), static_cast<int>(x.size()), gamma.data(), beta.data(), eps, y.data());
    return y;
}

// ---------------------------------------------------------------------------
// parameter trees

// Zero-filled parameter tree with the shapes cfg implies (gamma set to 1).
template <typename T = float>
MixerParams<T> alloc_params(const MixerConfig& cfg) {
    cfg.validate();
    MixerParams<T> p;
    p.blocks.resize(static_cast<size_t>(cfg.num_blocks));
    const int f = cfg.feature_dim, t = cfg.time_dim, h = cfg.feature_hidden, g = cfg.time_hidden;
    for (auto& b : p.blocks) {
        b.w1 = Mat<T>(h, f);
        b.w2 = Mat<T>(f, h);
        b.w3 = Mat<T>(g, t);
        b.w4 = Mat<T>(t, g);
        b.b1.assign(static_cast<size_t>(h), T(0));
        b.b2.assign(static_cast<size_t>(f), T(0));
        b.b3.assign(static_cast<size_t>(g), T(0));
        b.b4.assign(static_cast<size_t>(t), T(0));
        b.ln_f_gamma.assign(static_cast<size_t>(f), T(1));
        b.ln_f_beta.assign(static_cast<size_t>(f), T(0));
        b.ln_t_gamma.assign(static_cast<size_t>(t), T(1));
        b.ln_t_beta.assign(static_cast<size_t>(t), T(0));
    }
    if (cfg.input_mode == InputMode::kPatchEmbed) {
        p.patch_w = Mat<T>(f, cfg.patch_size * cfg.patch_size);
        p.patch_b.assign(static_cast<size_t>(f), T(0));
    }
    if (cfg.num_classes > 0) {
        p.decoder_w = Mat<T>(cfg.num_classes, f);
        p.decoder_b.assign(static_cast<size_t>(cfg.num_classes), T(0));
    }
    return p;
}

// Weights ~ uniform(-s, s) with s = sqrt(1/fan_in); biases 0; gamma 1, beta 0.
// Draw order is fixed (blocks in order, w1/w2/w3/w4 row-major, then patch and
// decoder weights) so a seed pins the whole tree.
template <typename T = float>
MixerParams<T> init_params(const MixerConfig& cfg, Rng& rng) {
    MixerParams<T> p = alloc_params<T>(cfg);
    auto fill_uniform = [&rng](Mat<T>& w, int fan_in) {
        const double s = std::sqrt(1.0 / fan_in);
        for (auto& v : w.data) v = static_cast<T>(rng.uniform(-s, s));
    };
    for (auto& b : p.blocks) {
        fill_uniform(b.w1, cfg.feature_dim);
        fill_uniform(b.w2, cfg.feature_hidden);
        fill_uniform(b.w3, cfg.time_dim);
        fill_uniform(b.w4, cfg.time_hidden);
    }
    if (p.has_patch_embed()) fill_uniform(p.patch_w, cfg.patch_size * cfg.patch_size);
    if (p.has_decoder()) fill_uniform(p.decoder_w, cfg.feature_dim);
    return p;
}

template <typename T>
Gradients<T> zeros_like(const MixerParams<T>& p) {
    Gradients<T> z;
    z.blocks.resize(p.blocks.size());
    for (size_t i = 0; i < p.blocks.size(); ++i) {
        const auto& b = p.blocks[i];
        auto& o = z.blocks[i];
        o.w1 = Mat<T>(b.w1.rows, b.w1.cols);
        o.w2 = Mat<T>(b.w2.rows, b.w2.cols);
        o.w3 = Mat<T>(b.w3.rows, b.w3.cols);
        o.w4 = Mat<T>(b.w4.rows, b.w4.cols);
        o.b1.assign(b.b1.size(), T(0));
        o.b2.assign(b.b2.size(), T(0));
        o.b3.assign(b.b3.size(), T(0));
        o.b4.assign(b.b4.size(), T(0));
        o.ln_f_gamma.assign(b.ln_f_gamma.size(), T(0));
        o.ln_f_beta.assign(b.ln_f_beta.size(), T(0));
        o.ln_t_gamma.assign(b.ln_t_gamma.size(), T(0));
        o.ln_t_beta.assign(b.ln_t_beta.size(), T(0));
    }
    if (p.patch_w.rows > 0) {
        z.patch_w = Mat<T>(p.patch_w.rows, p.patch_w.cols);
        z.patch_b.assign(p.patch_b.size(), T(0));
    }
    if (p.decoder_w.rows > 0) {
        z.decoder_w = Mat<T>(p.decoder_w.rows, p.decoder_w.cols);
        z.decoder_b.assign(p.decoder_b.size(), T(0));
    }
    return z;
}

// Visit every tensor in checkpoint order. F is called with (name, rows, cols,
// vector&); vectors get cols == 0. Works on const and mutable trees.
template <typename MP, typename F>
void visit_params(MP& p, F&& f) {
    for (size_t i = 0; i < p.blocks.size(); ++i) {
        auto& b = p.blocks[i];
        const std::string pre = "block" + std::to_string(i) + ".";
        f(pre + "w1", b.w1.rows, b.w1.cols, b.w1.data);
        f(pre + "b1", static_cast<int>(b.b1.size()), 0, b.b1);
        f(pre + "w2", b.w2.rows, b.w2.cols, b.w2.data);
        f(pre + "b2", static_cast<int>(b.b2.size()), 0, b.b2);
        f(pre + "w3", b.w3.rows, b.w3.cols, b.w3.data);
        f(pre + "b3", static_cast<int>(b.b3.size()), 0, b.b3);
        f(pre + "w4", b.w4.rows, b.w4.cols, b.w4.data);
        f(pre + "b4", static_cast<int>(b.b4.size()), 0, b.b4);
        f(pre + "ln_f.gamma", static_cast<int>(b.ln_f_gamma.size()), 0, b.ln_f_gamma);
        f(pre + "ln_f.beta", static_cast<int>(b.ln_f_beta.size()), 0, b.ln_f_beta);
        f(pre + "ln_t.gamma", static_cast<int>(b.ln_t_gamma.size()), 0, b.ln_t_gamma);
        f(pre + "ln_t.beta", static_cast<int>(b.ln_t_beta.size()), 0, b.ln_t_beta);
    }
    if (p.has_patch_embed()) {
        f(std::string("patch.w"), p.patch_w.rows, p.patch_w.cols, p.patch_w.data);
        f(std::string("patch.b"), static_cast<int>(p.patch_b.size()), 0, p.patch_b);
    }
    if (p.has_decoder()) {
        f(std::string("decoder.w"), p.decoder_w.rows, p.decoder_w.cols, p.decoder_w.data);
        f(std::string("decoder.b"), static_cast<int>(p.decoder_b.size()), 0, p.decoder_b);
    }
}

// Lockstep visit of two congruent trees (params & grads, params & moments).
template <typename T, typename F>
void visit_params2(MixerParams<T>& a, const MixerParams<T>& b, F&& f) {
    if (a.blocks.size() != b.blocks.size())
        throw std::runtime_error("parameter trees differ in block count");
    auto pair = [&f](std::vector<T>& x, const std::vector<T>& y) {
        if (x.size() != y.size()) throw std::runtime_error("parameter trees differ in shape");
        f(x, y);
    };
    for (size_t i = 0; i < a.blocks.size(); ++i) {
        auto& x = a.blocks[i];
        const auto& y = b.blocks[i];
        pair(x.w1.data, y.w1.data); pair(x.b1, y.b1);
        pair(x.w2.data, y.w2.data); pair(x.b2, y.b2);
        pair(x.w3.data, y.w3.data); pair(x.b3, y.b3);
        pair(x.w4.data, y.w4.data); pair(x.b4, y.b4);
        pair(x.ln_f_gamma, y.ln_f_gamma); pair(x.ln_f_beta, y.ln_f_beta);
        pair(x.ln_t_gamma, y.ln_t_gamma); pair(x.ln_t_beta, y.ln_t_beta);
    }
    pair(a.patch_w.data, b.patch_w.data); pair(a.patch_b, b.patch_b);
    pair(a.decoder_w.data, b.decoder_w.data); pair(a.decoder_b, b.decoder_b);
}

// ---------------------------------------------------------------------------
// forward / backward machinery

template <typename T>
struct MixStageTrace {
    Mat<T> xhat;            // d x n normalized inputs
    std::vector<T> inv_std; // n
    Mat<T> pre_act;         // hidden x n
    Mat<T> post_act;        // hidden x n (after dropout when active)
    Mat<T> drop_mask;       // hidden x n, only when dropout is active
};

template <typename T>
struct BlockTrace {
    Mat<T> input; // f x t block input
    Mat<T> mid;   // f x t after feature mixing
    MixStageTrace<T> feat;
    MixStageTrace<T> time;
};

template <typename T>
struct ForwardTrace {
    Mat<T> pre_patch;  // original input (patch modes only)
    Mat<T> block_in;   // input to block 0 (after patchify)
    std::vector<BlockTrace<T>> blocks;
    Mat<T> final_out;  // O, f x t
    std::vector<T> embedding;
};

// Split X into patch x patch tiles (scanned row-major), flatten each tile
// row-major into a column; kPatchEmbed maps each flattened tile through a
// shared linear layer first.
template <typename T>
Mat<T> patchify(const Mat<T>& x, InputMode mode, int patch,
                const Mat<T>& embed_w = {}, const std::vector<T>& embed_b = {});

// Inverse of the kPatchReshape permutation.
template <typename T>
Mat<T> unpatchify_reshape(const Mat<T>& cols, int rows, int n_cols, int patch);

template <typename T>
Mat<T> feature_mixing_forward(const Mat<T>& x, const BlockParams<T>& b, const MixerConfig& cfg,
                              MixStageTrace<T>* trace = nullptr, Rng* dropout_rng = nullptr);

template <typename T>
Mat<T> time_mixing_forward(const Mat<T>& u, const BlockParams<T>& b, const MixerConfig& cfg,
                           MixStageTrace<T>* trace = nullptr, Rng* dropout_rng = nullptr);

// Full encoder: patchify (if configured), num_blocks mixing blocks, average
// pooling over time. Throws on shape mismatch or non-finite intermediates.
template <typename T>
std::vector<T> encoder_forward(const Mat<T>& x, const MixerParams<T>& params,
                               const MixerConfig& cfg, ForwardTrace<T>* trace = nullptr,
                               Rng* dropout_rng = nullptr);

template <typename T>
std::vector<T> decoder_forward(const std::vector<T>& z, const MixerParams<T>& params);

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits);

// -log softmax(logits)[label], max-subtracted for stability.
template <typename T>
T cross_entropy(const std::vector<T>& logits, int label);

template <typename T>
struct LossGrads {
    T loss = T(0);
    Gradients<T> grads;
};

// Mean cross-entropy over the batch and its exact analytic gradient w.r.t.
// every parameter (manual backprop through the full stack).
template <typename T>
LossGrads<T> loss_and_gradients(const std::vector<std::pair<Mat<T>, int>>& batch,
                                const MixerParams<T>& params, const MixerConfig& cfg,
                                Rng* dropout_rng = nullptr);

// ---------------------------------------------------------------------------
// size accounting

// Trainable scalars of the inference-time encoder (decoder excluded unless
// asked for; patch embedding counts as part of the encoder).
int64_t count_params(const MixerConfig& cfg, bool include_decoder = false);

// One multiply-accumulate per scalar multiply in the linear layers of a
// single f x t forward pass. LayerNorm, activations and pooling excluded.
int64_t count_macs(const MixerConfig& cfg);

} // namespace qbye

#include "qbye/mixer_impl.hpp"
