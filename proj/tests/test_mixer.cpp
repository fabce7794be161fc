// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "qbye/mixer.hpp"

using namespace qbye;

namespace {

// Straight-line double-precision reimplementation of the encoder: no shared
// helpers, plain loops only. Acts as the oracle for encoder_forward.
std::vector<double> scalar_encoder_oracle(const Mat<double>& input,
                                          const MixerParams<double>& p, const MixerConfig& cfg) {
    const int f = cfg.feature_dim, t = cfg.time_dim;
    const int h = cfg.feature_hidden, g = cfg.time_hidden;
    auto act = [&cfg](double x) {
        switch (cfg.activation) {
            case Activation::kHardswish: {
                double r = x + 3.0;
                if (r < 0.0) r = 0.0;
                if (r > 6.0) r = 6.0;
                return x * r / 6.0;
            }
            case Activation::kRelu:
                return x > 0.0 ? x : 0.0;
            case Activation::kSilu:
                return x / (1.0 + std::exp(-x));
            case Activation::kGelu:
                return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
        }
        return x;
    };

    std::vector<std::vector<double>> cur(static_cast<size_t>(f),
                                         std::vector<double>(static_cast<size_t>(t)));
    for (int i = 0; i < f; ++i)
        for (int j = 0; j < t; ++j) cur[i][j] = input.at(i, j);

    for (int b = 0; b < cfg.num_blocks; ++b) {
        const auto& bp = p.blocks[static_cast<size_t>(b)];
        // feature mixing, column by column
        std::vector<std::vector<double>> mid = cur;
        for (int j = 0; j < t; ++j) {
            double mu = 0.0;
            for (int i = 0; i < f; ++i) mu += cur[i][j];
            mu /= f;
            double var = 0.0;
            for (int i = 0; i < f; ++i) var += (cur[i][j] - mu) * (cur[i][j] - mu);
            var /= f;
            std::vector<double> normed(static_cast<size_t>(f));
            for (int i = 0; i < f; ++i)
                normed[i] = bp.ln_f_gamma[i] * (cur[i][j] - mu) / std::sqrt(var + kLayerNormEps) +
                            bp.ln_f_beta[i];
            std::vector<double> hid(static_cast<size_t>(h));
            for (int r = 0; r < h; ++r) {
                double acc = bp.b1[r];
                for (int c = 0; c < f; ++c) acc += bp.w1.at(r, c) * normed[c];
                hid[r] = act(acc);
            }
            for (int r = 0; r < f; ++r) {
                double acc = bp.b2[r];
                for (int c = 0; c < h; ++c) acc += bp.w2.at(r, c) * hid[c];
                mid[r][j] = cur[r][j] + acc;
            }
        }
        // time mixing, row by row
        std::vector<std::vector<double>> next = mid;
        for (int i = 0; i < f; ++i) {
            double mu = 0.0;
            for (int j = 0; j < t; ++j) mu += mid[i][j];
            mu /= t;
            double var = 0.0;
            for (int j = 0; j < t; ++j) var += (mid[i][j] - mu) * (mid[i][j] - mu);
            var /= t;
            std::vector<double> normed(static_cast<size_t>(t));
            for (int j = 0; j < t; ++j)
                normed[j] = bp.ln_t_gamma[j] * (mid[i][j] - mu) / std::sqrt(var + kLayerNormEps) +
                            bp.ln_t_beta[j];
            std::vector<double> hid(static_cast<size_t>(g));
            for (int r = 0; r < g; ++r) {
                double acc = bp.b3[r];
                for (int c = 0; c < t; ++c) acc += bp.w3.at(r, c) * normed[c];
                hid[r] = act(acc);
            }
            for (int r = 0; r < t; ++r) {
                double acc = bp.b4[r];
                for (int c = 0; c < g; ++c) acc += bp.w4.at(r, c) * hid[c];
                next[i][r] = mid[i][r] + acc;
            }
        }
        cur = next;
    }

    std::vector<double> z(static_cast<size_t>(f), 0.0);
    for (int i = 0; i < f; ++i) {
        for (int j = 0; j < t; ++j) z[static_cast<size_t>(i)] += cur[i][j];
        z[static_cast<size_t>(i)] /= t;
    }
    return z;
}

MixerConfig small_cfg(int f, int t, int h, int g, int blocks) {
    MixerConfig cfg;
    cfg.feature_dim = f;
    cfg.time_dim = t;
    cfg.feature_hidden = h;
    cfg.time_hidden = g;
    cfg.num_blocks = blocks;
    return cfg;
}

template <typename T>
Mat<T> random_matrix(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Mat<T> m(rows, cols);
    for (auto& v : m.data) v = static_cast<T>(rng.uniform(lo, hi));
    return m;
}

} // namespace

TEST_CASE("activation values at pinned points") {
    CHECK(activate(-3.0, Activation::kHardswish) == 0.0);
    CHECK(activate(3.0, Activation::kHardswish) == 3.0);
    CHECK(activate(1.0, Activation::kHardswish) == doctest::Approx(2.0 / 3.0));
    CHECK(activate(-5.0, Activation::kRelu) == 0.0);
    CHECK(activate(0.0, Activation::kSilu) == 0.0);
    CHECK(activate(0.0, Activation::kGelu) == 0.0);
    // hardswish kink derivatives pinned: -3 -> 0, 3 -> 1
    CHECK(activate_grad(-3.0, Activation::kHardswish) == 0.0);
    CHECK(activate_grad(3.0, Activation::kHardswish) == 1.0);
    CHECK(activate_grad(0.0, Activation::kHardswish) == doctest::Approx(0.5));
}

TEST_CASE("layer_norm basics") {
    std::vector<double> gamma{1.0, 1.0}, beta{0.0, 0.0};

    std::vector<double> constant{4.0, 4.0};
    auto y = layer_norm(constant, gamma, beta, 1e-5);
    CHECK(std::abs(y[0]) < 1e-9);
    CHECK(std::abs(y[1]) < 1e-9);

    std::vector<double> pm{1.0, -1.0};
    y = layer_norm(pm, gamma, beta, 0.0);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(-1.0));

    std::vector<double> zero_gamma{0.0, 0.0}, b{2.5, -1.5};
    y = layer_norm(pm, zero_gamma, b, 1e-5);
    CHECK(y[0] == doctest::Approx(2.5));
    CHECK(y[1] == doctest::Approx(-1.5));
}

TEST_CASE("zero-weight blocks are the identity map") {
    for (auto activation : {Activation::kHardswish, Activation::kGelu, Activation::kRelu,
                            Activation::kSilu}) {
        MixerConfig cfg = small_cfg(6, 5, 3, 4, 3);
        cfg.activation = activation;
        MixerParams<double> params = alloc_params<double>(cfg); // zero weights, gamma 1
        Rng rng(2);
        Mat<double> x = random_matrix<double>(6, 5, rng, -2.0, 2.0);
        std::vector<double> z = encoder_forward(x, params, cfg);
        // blocks reduce to identity -> z is the per-row temporal mean of x
        for (int i = 0; i < 6; ++i) {
            double mean = 0.0;
            for (int j = 0; j < 5; ++j) mean += x.at(i, j);
            mean /= 5;
            REQUIRE(z[static_cast<size_t>(i)] == doctest::Approx(mean).epsilon(1e-12));
        }
        Mat<double> u = feature_mixing_forward(x, params.blocks[0], cfg);
        REQUIRE(u.data == x.data);
        Mat<double> y = time_mixing_forward(x, params.blocks[0], cfg);
        REQUIRE(y.data == x.data);
    }
}

TEST_CASE("constant input stays constant through identity blocks") {
    MixerConfig cfg = small_cfg(4, 7, 2, 2, 2);
    MixerParams<double> params = alloc_params<double>(cfg);
    Mat<double> x(4, 7, 3.25);
    std::vector<double> z = encoder_forward(x, params, cfg);
    for (double v : z) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("blocks preserve f x t shape for every hidden size") {
    Rng rng(4);
    for (int h : {1, 4, 64}) {
        for (int g : {1, 4, 64}) {
            MixerConfig cfg = small_cfg(9, 7, h, g, 1);
            Rng prng = rng.child("p", static_cast<uint64_t>(h), static_cast<uint64_t>(g));
            MixerParams<float> params = init_params<float>(cfg, prng);
            Mat<float> x = random_matrix<float>(9, 7, rng);
            Mat<float> u = feature_mixing_forward(x, params.blocks[0], cfg);
            CHECK(u.rows == 9);
            CHECK(u.cols == 7);
            Mat<float> y = time_mixing_forward(u, params.blocks[0], cfg);
            CHECK(y.rows == 9);
            CHECK(y.cols == 7);
            std::vector<float> z = encoder_forward(x, params, cfg);
            CHECK(z.size() == 9);
        }
    }
}

TEST_CASE("feature mixing matches a hand-computed 2x1 case") {
    // f=2, t=1, relu, W1 = [[1,0],[0,1]], W2 = I, biases 0, gamma 1, beta 0
    MixerConfig cfg = small_cfg(2, 1, 2, 2, 1);
    cfg.activation = Activation::kRelu;
    MixerParams<double> p = alloc_params<double>(cfg);
    p.blocks[0].w1.at(0, 0) = 1.0;
    p.blocks[0].w1.at(1, 1) = 1.0;
    p.blocks[0].w2.at(0, 0) = 1.0;
    p.blocks[0].w2.at(1, 1) = 1.0;
    Mat<double> x(2, 1);
    x.at(0, 0) = 1.0;
    x.at(1, 0) = -1.0;
    // LN([1,-1]) = [1,-1]/sqrt(1+eps); relu keeps [a, 0]; W2 passes through
    const double a = 1.0 / std::sqrt(1.0 + kLayerNormEps);
    Mat<double> u = feature_mixing_forward(x, p.blocks[0], cfg);
    CHECK(u.at(0, 0) == doctest::Approx(1.0 + a).epsilon(1e-12));
    CHECK(u.at(1, 0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("time mixing is feature mixing on the transpose") {
    Rng rng(12);
    MixerConfig row_cfg = small_cfg(4, 4, 3, 3, 1);
    MixerParams<double> p = alloc_params<double>(row_cfg);
    auto& b = p.blocks[0];
    b.w1 = random_matrix<double>(3, 4, rng);
    b.w2 = random_matrix<double>(4, 3, rng);
    for (auto& v : b.b1) v = rng.uniform(-0.5, 0.5);
    for (auto& v : b.b2) v = rng.uniform(-0.5, 0.5);
    for (auto& v : b.ln_f_gamma) v = rng.uniform(0.5, 1.5);
    for (auto& v : b.ln_f_beta) v = rng.uniform(-0.5, 0.5);
    // mirror the feature-mixing parameters into the time-mixing slots
    b.w3 = b.w1;
    b.w4 = b.w2;
    b.b3 = b.b1;
    b.b4 = b.b2;
    b.ln_t_gamma = b.ln_f_gamma;
    b.ln_t_beta = b.ln_f_beta;

    Mat<double> x = random_matrix<double>(4, 4, rng);
    Mat<double> via_feature = feature_mixing_forward(x, b, row_cfg);
    Mat<double> via_time = time_mixing_forward(x.transposed(), b, row_cfg).transposed();
    REQUIRE(via_feature.rows == via_time.rows);
    for (size_t i = 0; i < via_feature.data.size(); ++i)
        REQUIRE(via_feature.data[i] == doctest::Approx(via_time.data[i]).epsilon(1e-12));
}

TEST_CASE("encoder matches the straight-line scalar oracle on the full-size config") {
    MixerConfig cfg; // 81x81, h=g=64, 12 blocks, hardswish
    Rng rng(0);
    MixerParams<double> params = init_params<double>(cfg, rng);
    Mat<double> x = random_matrix<double>(81, 81, rng, -2.0, 2.0);

    std::vector<double> z = encoder_forward(x, params, cfg);
    std::vector<double> oracle = scalar_encoder_oracle(x, params, cfg);
    REQUIRE(z.size() == oracle.size());
    REQUIRE(z.size() == 81);
    for (size_t i = 0; i < z.size(); ++i) {
        const double rel = std::abs(z[i] - oracle[i]) / std::max(1e-12, std::abs(oracle[i]));
        REQUIRE(rel < 1e-5);
    }
}

TEST_CASE("encoder matches the oracle for every activation") {
    Rng rng(9);
    for (auto activation : {Activation::kGelu, Activation::kRelu, Activation::kSilu}) {
        MixerConfig cfg = small_cfg(8, 8, 4, 4, 2);
        cfg.activation = activation;
        Rng prng = rng.child("p", static_cast<uint64_t>(activation));
        MixerParams<double> params = init_params<double>(cfg, prng);
        Mat<double> x = random_matrix<double>(8, 8, rng);
        std::vector<double> z = encoder_forward(x, params, cfg);
        std::vector<double> oracle = scalar_encoder_oracle(x, params, cfg);
        for (size_t i = 0; i < z.size(); ++i)
            REQUIRE(z[i] == doctest::Approx(oracle[i]).epsilon(1e-9));
    }
}

TEST_CASE("encoder forward is deterministic") {
    MixerConfig cfg = small_cfg(81, 81, 8, 8, 2);
    Rng rng(31);
    MixerParams<float> params = init_params<float>(cfg, rng);
    Mat<float> x = random_matrix<float>(81, 81, rng);
    std::vector<float> a = encoder_forward(x, params, cfg);
    std::vector<float> b = encoder_forward(x, params, cfg);
    REQUIRE(a == b); // bit-identical
}

TEST_CASE("decoder basics") {
    MixerConfig cfg = small_cfg(4, 4, 2, 2, 1);
    cfg.num_classes = 3;
    MixerParams<double> p = alloc_params<double>(cfg);
    std::vector<double> z{0.0, 1.0, 0.0, 0.0}; // one-hot at 1

    // zero weights -> zero logits
    auto logits = decoder_forward(z, p);
    for (double v : logits) CHECK(v == 0.0);

    Rng rng(5);
    p.decoder_w = random_matrix<double>(3, 4, rng);
    logits = decoder_forward(z, p);
    for (int i = 0; i < 3; ++i) CHECK(logits[static_cast<size_t>(i)] == p.decoder_w.at(i, 1));

    // single class: scalar dot product
    MixerConfig cfg1 = small_cfg(4, 4, 2, 2, 1);
    cfg1.num_classes = 1;
    MixerParams<double> p1 = alloc_params<double>(cfg1);
    p1.decoder_w = random_matrix<double>(1, 4, rng);
    p1.decoder_b[0] = 0.25;
    logits = decoder_forward(z, p1);
    CHECK(logits.size() == 1);
    CHECK(logits[0] == doctest::Approx(p1.decoder_w.at(0, 1) + 0.25));

    MixerParams<double> no_decoder = alloc_params<double>(small_cfg(4, 4, 2, 2, 1));
    CHECK_THROWS_AS(decoder_forward(z, no_decoder), std::runtime_error);
}

TEST_CASE("cross_entropy reference values") {
    std::vector<double> uniform(7, 1.25);
    CHECK(cross_entropy(uniform, 3) == doctest::Approx(std::log(7.0)).epsilon(1e-12));

    std::vector<double> saturated{-50.0, 50.0, -50.0};
    CHECK(cross_entropy(saturated, 1) < 1e-8);

    std::vector<double> logits{1.0, 2.0, 3.0};
    const double expected = std::log(1.0 + std::exp(-1.0) + std::exp(-2.0));
    CHECK(cross_entropy(logits, 2) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(cross_entropy(logits, 2) == doctest::Approx(0.40760596444438104).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(logits, 3), std::runtime_error);
    CHECK_THROWS_AS(cross_entropy(logits, -1), std::runtime_error);
}

TEST_CASE("parameter and mac counts reproduce the reference model sizes") {
    MixerConfig cfg; // the shipped default: f=t=81, h=g=64, 12 blocks
    CHECK(count_params(cfg) == 256200);
    CHECK(count_macs(cfg) == 20155392);
    CHECK(count_params(cfg) == 12 * (2 * (64 * 81 + 64 + 81 * 64 + 81) + 4 * 81));
    CHECK(count_macs(cfg) == int64_t{12} * 4 * (64 * 81 * 81));

    cfg.num_classes = 1000;
    CHECK(count_params(cfg, true) == 256200 + 1000 * 81 + 1000);

    MixerConfig empty;
    empty.num_blocks = 0;
    CHECK(count_params(empty) == 0);
    CHECK(count_macs(empty) == 0);
}

TEST_CASE("patch embedding adds the documented parameter and mac cost") {
    MixerConfig direct;
    MixerConfig patched;
    patched.input_mode = InputMode::kPatchEmbed;
    patched.patch_size = 9;
    CHECK(count_params(patched) - count_params(direct) == 81 * 81 + 81); // 6642, ~7K
    CHECK(count_macs(patched) - count_macs(direct) == int64_t{81} * 81 * 81); // ~500K
}

TEST_CASE("patch reshape is a bijection") {
    Rng rng(6);
    Mat<float> x = random_matrix<float>(81, 81, rng);
    Mat<float> cols = patchify(x, InputMode::kPatchReshape, 9);
    REQUIRE(cols.rows == 81);
    REQUIRE(cols.cols == 81);
    Mat<float> back = unpatchify_reshape(cols, 81, 81, 9);
    REQUIRE(back.data == x.data);
}

TEST_CASE("identity patch embedding equals patch reshape") {
    Rng rng(8);
    Mat<float> x = random_matrix<float>(4, 4, rng);
    Mat<float> eye(4, 4);
    for (int i = 0; i < 4; ++i) eye.at(i, i) = 1.0f;
    std::vector<float> bias(4, 0.0f);
    Mat<float> reshaped = patchify(x, InputMode::kPatchReshape, 2);
    Mat<float> embedded = patchify(x, InputMode::kPatchEmbed, 2, eye, bias);
    REQUIRE(embedded.data == reshaped.data);
}

TEST_CASE("patchify rejects indivisible patch sizes") {
    Mat<float> x(81, 81);
    CHECK_THROWS_AS(patchify(x, InputMode::kPatchReshape, 5), std::runtime_error);
}

TEST_CASE("init_params is deterministic and respects its bounds") {
    MixerConfig cfg = small_cfg(16, 12, 8, 6, 3);
    cfg.num_classes = 4;
    Rng a(77), b(77);
    MixerParams<float> pa = init_params<float>(cfg, a);
    MixerParams<float> pb = init_params<float>(cfg, b);
    bool identical = true;
    visit_params(pa, [&](const std::string& name, int, int, const std::vector<float>& v) {
        std::vector<float>* other = nullptr;
        visit_params(pb, [&](const std::string& n2, int, int, std::vector<float>& v2) {
            if (n2 == name) other = &v2;
        });
        REQUIRE(other != nullptr);
        if (v != *other) identical = false;
    });
    CHECK(identical);

    for (const auto& blk : pa.blocks) {
        for (float v : blk.w1.data) CHECK(std::abs(v) <= std::sqrt(1.0 / 16));
        for (float v : blk.w2.data) CHECK(std::abs(v) <= std::sqrt(1.0 / 8));
        for (float v : blk.w3.data) CHECK(std::abs(v) <= std::sqrt(1.0 / 12));
        for (float v : blk.w4.data) CHECK(std::abs(v) <= std::sqrt(1.0 / 6));
        for (float v : blk.b1) CHECK(v == 0.0f);
        for (float v : blk.ln_f_gamma) CHECK(v == 1.0f);
        for (float v : blk.ln_f_beta) CHECK(v == 0.0f);
        for (float v : blk.ln_t_gamma) CHECK(v == 1.0f);
    }
}

TEST_CASE("encoder rejects mismatched shapes") {
    MixerConfig cfg = small_cfg(8, 8, 4, 4, 1);
    Rng rng(1);
    MixerParams<float> params = init_params<float>(cfg, rng);
    Mat<float> wrong = random_matrix<float>(8, 9, rng);
    CHECK_THROWS_AS(encoder_forward(wrong, params, cfg), std::runtime_error);
}

TEST_CASE("encoder flags numeric blow-ups") {
    MixerConfig cfg = small_cfg(8, 8, 4, 4, 2);
    Rng rng(2);
    MixerParams<float> params = init_params<float>(cfg, rng);
    params.blocks[1].w2.at(0, 0) = std::numeric_limits<float>::infinity();
    Mat<float> x = random_matrix<float>(8, 8, rng);
    CHECK_THROWS_WITH_AS(encoder_forward(x, params, cfg), doctest::Contains("non-finite"),
                         std::runtime_error);
}
