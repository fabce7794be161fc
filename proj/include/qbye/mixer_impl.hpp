// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

// Template implementation for mixer.hpp. Include mixer.hpp, not this file.

#pragma once

#include <algorithm>

namespace qbye {

namespace detail {

// One mixing stage applied to every logical vector of a d x n view. `get`
// reads entry (i, j) of input vector j, `put_add` accumulates the MLP
// projection into the output (the caller seeds the output with the residual).
template <typename T, typename Get, typename PutAdd>
void mix_stage(int d, int n, int hidden, const Mat<T>& wa, const std::vector<T>& ba,
               const Mat<T>& wb, const std::vector<T>& bb, const std::vector<T>& gamma,
               const std::vector<T>& beta, Activation act, float dropout, Rng* dropout_rng,
               MixStageTrace<T>* trace, Get get, PutAdd put_add) {
    if (wa.rows != hidden || wa.cols != d || wb.rows != d || wb.cols != hidden ||
        static_cast<int>(ba.size()) != hidden || static_cast<int>(bb.size()) != d ||
        static_cast<int>(gamma.size()) != d || static_cast<int>(beta.size()) != d) {
        throw std::runtime_error("mixing stage: shape mismatch between input and parameters");
    }
    const bool dropping = dropout > 0.0f && dropout_rng != nullptr;
    if (trace) {
        trace->xhat = Mat<T>(d, n);
        trace->inv_std.assign(static_cast<size_t>(n), T(0));
        trace->pre_act = Mat<T>(hidden, n);
        trace->post_act = Mat<T>(hidden, n);
        if (dropping) trace->drop_mask = Mat<T>(hidden, n);
    }
    std::vector<T> x(static_cast<size_t>(d)), normed(static_cast<size_t>(d));
    std::vector<T> xhat(static_cast<size_t>(d));
    std::vector<T> hid(static_cast<size_t>(hidden)), proj(static_cast<size_t>(d));
    const T keep = T(1) - static_cast<T>(dropout);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] = get(i, j);
        T inv_std = T(0);
        layer_norm(x.data(), d, gamma.data(), beta.data(), static_cast<T>(kLayerNormEps),
                   normed.data(), xhat.data(), &inv_std);
        matvec_add(wa, normed.data(), ba, hid.data());
        if (trace) {
            for (int i = 0; i < d; ++i) trace->xhat.at(i, j) = xhat[static_cast<size_t>(i)];
            trace->inv_std[static_cast<size_t>(j)] = inv_std;
            for (int i = 0; i < hidden; ++i) trace->pre_act.at(i, j) = hid[static_cast<size_t>(i)];
        }
        for (int i = 0; i < hidden; ++i)
            hid[static_cast<size_t>(i)] = activate(hid[static_cast<size_t>(i)], act);
        if (dropping) {
            for (int i = 0; i < hidden; ++i) {
                T mask = dropout_rng->uniform() < dropout ? T(0) : T(1) / keep;
                if (trace) trace->drop_mask.at(i, j) = mask;
                hid[static_cast<size_t>(i)] *= mask;
            }
        }
        if (trace)
            for (int i = 0; i < hidden; ++i) trace->post_act.at(i, j) = hid[static_cast<size_t>(i)];
        matvec_add(wb, hid.data(), bb, proj.data());
        for (int i = 0; i < d; ++i) put_add(i, j, proj[static_cast<size_t>(i)]);
    }
}

// dx_ln = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat)) with
// dxhat = da .* gamma. Accumulates dgamma/dbeta; emits dx_ln via add_dx.
template <typename T, typename AddDx>
void layer_norm_backward(const T* da, const T* xhat, T inv_std, int d, const T* gamma,
                         T* dgamma, T* dbeta, AddDx add_dx) {
    T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
    for (int i = 0; i < d; ++i) {
        const T dxh = da[i] * gamma[i];
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xhat[i];
        dgamma[i] += da[i] * xhat[i];
        dbeta[i] += da[i];
    }
    mean_dxhat /= T(d);
    mean_dxhat_xhat /= T(d);
    for (int i = 0; i < d; ++i) {
        const T dxh = da[i] * gamma[i];
        add_dx(i, inv_std * (dxh - mean_dxhat - xhat[i] * mean_dxhat_xhat));
    }
}

// Backward of one mixing stage. get_dy reads the upstream gradient of the
// stage output; add_dx accumulates the LN-path input gradient (the residual
// path is the caller's job).
template <typename T, typename GetDy, typename AddDx>
void mix_stage_backward(int d, int n, int hidden, const Mat<T>& wa, const Mat<T>& wb,
                        const std::vector<T>& gamma, const std::vector<T>& beta, Activation act,
                        const MixStageTrace<T>& tr, Mat<T>& grad_wa, std::vector<T>& grad_ba,
                        Mat<T>& grad_wb, std::vector<T>& grad_bb, std::vector<T>& grad_gamma,
                        std::vector<T>& grad_beta, GetDy get_dy, AddDx add_dx) {
    const bool dropping = tr.drop_mask.rows > 0;
    std::vector<T> dproj(static_cast<size_t>(d)), dhid(static_cast<size_t>(hidden));
    std::vector<T> da(static_cast<size_t>(d)), normed(static_cast<size_t>(d));
    std::vector<T> xhat_col(static_cast<size_t>(d)), post_col(static_cast<size_t>(hidden));
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < d; ++i) dproj[static_cast<size_t>(i)] = get_dy(i, j);
        for (int i = 0; i < d; ++i) xhat_col[static_cast<size_t>(i)] = tr.xhat.at(i, j);
        for (int i = 0; i < hidden; ++i) post_col[static_cast<size_t>(i)] = tr.post_act.at(i, j);

        for (int i = 0; i < d; ++i)
            grad_bb[static_cast<size_t>(i)] += dproj[static_cast<size_t>(i)];
        outer_accumulate(grad_wb, dproj.data(), post_col.data());
        matvec_transpose(wb, dproj.data(), dhid.data());
        if (dropping)
            for (int i = 0; i < hidden; ++i) dhid[static_cast<size_t>(i)] *= tr.drop_mask.at(i, j);
        for (int i = 0; i < hidden; ++i)
            dhid[static_cast<size_t>(i)] *= activate_grad(tr.pre_act.at(i, j), act);
        for (int i = 0; i < hidden; ++i)
            grad_ba[static_cast<size_t>(i)] += dhid[static_cast<size_t>(i)];
        // rebuild a = gamma .* xhat + beta from the cached normalization
        for (int i = 0; i < d; ++i)
            normed[static_cast<size_t>(i)] =
                gamma[static_cast<size_t>(i)] * xhat_col[static_cast<size_t>(i)] +
                beta[static_cast<size_t>(i)];
        outer_accumulate(grad_wa, dhid.data(), normed.data());
        matvec_transpose(wa, dhid.data(), da.data());
        layer_norm_backward(da.data(), xhat_col.data(), tr.inv_std[static_cast<size_t>(j)], d,
                            gamma.data(), grad_gamma.data(), grad_beta.data(),
                            [&](int i, T v) { add_dx(i, j, v); });
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// patchify

template <typename T>
Mat<T> patchify(const Mat<T>& x, InputMode mode, int patch, const Mat<T>& embed_w,
                const std::vector<T>& embed_b) {
    if (mode == InputMode::kDirect) return x;
    if (patch < 1 || x.rows % patch != 0 || x.cols % patch != 0)
        throw std::runtime_error("patchify: patch size must divide both input dims");
    const int py = x.rows / patch, px = x.cols / patch;
    const int flat = patch * patch;
    Mat<T> cols(flat, py * px);
    for (int pr = 0; pr < py; ++pr)
        for (int pc = 0; pc < px; ++pc) {
            const int col = pr * px + pc;
            for (int r = 0; r < patch; ++r)
                for (int c = 0; c < patch; ++c)
                    cols.at(r * patch + c, col) = x.at(pr * patch + r, pc * patch + c);
        }
    if (mode == InputMode::kPatchReshape) return cols;
    if (embed_w.rows == 0) throw std::runtime_error("patchify: missing patch embedding weights");
    if (embed_w.cols != flat) throw std::runtime_error("patchify: embedding weight shape mismatch");
    Mat<T> out(embed_w.rows, cols.cols);
    std::vector<T> in(static_cast<size_t>(flat)), y(static_cast<size_t>(embed_w.rows));
    for (int j = 0; j < cols.cols; ++j) {
        for (int i = 0; i < flat; ++i) in[static_cast<size_t>(i)] = cols.at(i, j);
        matvec_add(embed_w, in.data(), embed_b, y.data());
        for (int i = 0; i < embed_w.rows; ++i) out.at(i, j) = y[static_cast<size_t>(i)];
    }
    return out;
}

template <typename T>
Mat<T> unpatchify_reshape(const Mat<T>& cols, int rows, int n_cols, int patch) {
    Mat<T> x(rows, n_cols);
    const int py = rows / patch, px = n_cols / patch;
    for (int pr = 0; pr < py; ++pr)
        for (int pc = 0; pc < px; ++pc) {
            const int col = pr * px + pc;
            for (int r = 0; r < patch; ++r)
                for (int c = 0; c < patch; ++c)
                    x.at(pr * patch + r, pc * patch + c) = cols.at(r * patch + c, col);
        }
    return x;
}

// ---------------------------------------------------------------------------
// forward

template <typename T>
Mat<T> feature_mixing_forward(const Mat<T>& x, const BlockParams<T>& b, const MixerConfig& cfg,
                              MixStageTrace<T>* trace, Rng* dropout_rng) {
    if (x.rows != cfg.feature_dim || x.cols != cfg.time_dim)
        throw std::runtime_error("feature mixing: input shape mismatch");
    Mat<T> out = x; // residual
    detail::mix_stage(
        cfg.feature_dim, cfg.time_dim, cfg.feature_hidden, b.w1, b.b1, b.w2, b.b2, b.ln_f_gamma,
        b.ln_f_beta, cfg.activation, cfg.dropout, dropout_rng, trace,
        [&x](int i, int j) { return x.at(i, j); },
        [&out](int i, int j, T v) { out.at(i, j) += v; });
    return out;
}

template <typename T>
Mat<T> time_mixing_forward(const Mat<T>& u, const BlockParams<T>& b, const MixerConfig& cfg,
                           MixStageTrace<T>* trace, Rng* dropout_rng) {
    if (u.rows != cfg.feature_dim || u.cols != cfg.time_dim)
        throw std::runtime_error("time mixing: input shape mismatch");
    Mat<T> out = u; // residual
    // logical vectors are the rows: vector j is feature row j across time
    detail::mix_stage(
        cfg.time_dim, cfg.feature_dim, cfg.time_hidden, b.w3, b.b3, b.w4, b.b4, b.ln_t_gamma,
        b.ln_t_beta, cfg.activation, cfg.dropout, dropout_rng, trace,
        [&u](int i, int j) { return u.at(j, i); },
        [&out](int i, int j, T v) { out.at(j, i) += v; });
    return out;
}

template <typename T>
std::vector<T> encoder_forward(const Mat<T>& x, const MixerParams<T>& params,
                               const MixerConfig& cfg, ForwardTrace<T>* trace,
                               Rng* dropout_rng) {
    cfg.validate();
    if (params.blocks.size() != static_cast<size_t>(cfg.num_blocks))
        throw std::runtime_error("encoder: parameter block count does not match config");
    Mat<T> cur;
    if (cfg.input_mode == InputMode::kDirect) {
        cur = x;
    } else {
        if (trace) trace->pre_patch = x;
        cur = patchify(x, cfg.input_mode, cfg.patch_size, params.patch_w, params.patch_b);
    }
    if (cur.rows != cfg.feature_dim || cur.cols != cfg.time_dim)
        throw std::runtime_error("encoder: input shape mismatch");
    if (trace) {
        trace->block_in = cur;
        trace->blocks.resize(params.blocks.size());
    }
    for (size_t bi = 0; bi < params.blocks.size(); ++bi) {
        BlockTrace<T>* bt = trace ? &trace->blocks[bi] : nullptr;
        if (bt) bt->input = cur;
        Mat<T> mid = feature_mixing_forward(cur, params.blocks[bi], cfg,
                                            bt ? &bt->feat : nullptr, dropout_rng);
        if (bt) bt->mid = mid;
        cur = time_mixing_forward(mid, params.blocks[bi], cfg, bt ? &bt->time : nullptr,
                                  dropout_rng);
        if (!cur.all_finite())
            throw std::runtime_error("encoder: non-finite values after block " +
                                     std::to_string(bi));
    }
    std::vector<T> z(static_cast<size_t>(cfg.feature_dim));
    for (int i = 0; i < cfg.feature_dim; ++i) {
        T acc = T(0);
        const T* row = cur.row(i);
        for (int j = 0; j < cfg.time_dim; ++j) acc += row[j];
        z[static_cast<size_t>(i)] = acc / T(cfg.time_dim);
    }
    if (trace) {
        trace->final_out = cur;
        trace->embedding = z;
    }
    return z;
}

template <typename T>
std::vector<T> decoder_forward(const std::vector<T>& z, const MixerParams<T>& params) {
    if (!params.has_decoder())
        throw std::runtime_error("decoder: parameters carry no decoder (inference checkpoint?)");
    if (static_cast<int>(z.size()) != params.decoder_w.cols)
        throw std::runtime_error("decoder: embedding length mismatch");
    std::vector<T> logits(static_cast<size_t>(params.decoder_w.rows));
    matvec_add(params.decoder_w, z.data(), params.decoder_b, logits.data());
    return logits;
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
    T mx = logits[0];
    for (T v : logits) mx = std::max(mx, v);
    std::vector<T> p(logits.size());
    T sum = T(0);
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

template <typename T>
T cross_entropy(const std::vector<T>& logits, int label) {
    if (label < 0 || label >= static_cast<int>(logits.size()))
        throw std::runtime_error("cross_entropy: label out of range");
    T mx = logits[0];
    for (T v : logits) mx = std::max(mx, v);
    T sum = T(0);
    for (T v : logits) sum += std::exp(v - mx);
    return std::log(sum) - (logits[static_cast<size_t>(label)] - mx);
}

// ---------------------------------------------------------------------------
// backward

namespace detail {

// Backward through one block given dY (gradient at the block output).
// Returns dX (gradient at the block input), accumulating into grads.
template <typename T>
Mat<T> block_backward(const BlockTrace<T>& tr, const BlockParams<T>& b, BlockParams<T>& gb,
                      const MixerConfig& cfg, const Mat<T>& dy) {
    // time stage: Y = U + proj_rows(U); residual first, LN path on top
    Mat<T> du = dy;
    mix_stage_backward(
        cfg.time_dim, cfg.feature_dim, cfg.time_hidden, b.w3, b.w4, b.ln_t_gamma, b.ln_t_beta,
        cfg.activation, tr.time, gb.w3, gb.b3, gb.w4, gb.b4, gb.ln_t_gamma, gb.ln_t_beta,
        [&dy](int i, int j) { return dy.at(j, i); },
        [&du](int i, int j, T v) { du.at(j, i) += v; });
    // feature stage: U = X + proj_cols(X)
    Mat<T> dx = du;
    mix_stage_backward(
        cfg.feature_dim, cfg.time_dim, cfg.feature_hidden, b.w1, b.w2, b.ln_f_gamma, b.ln_f_beta,
        cfg.activation, tr.feat, gb.w1, gb.b1, gb.w2, gb.b2, gb.ln_f_gamma, gb.ln_f_beta,
        [&du](int i, int j) { return du.at(i, j); },
        [&dx](int i, int j, T v) { dx.at(i, j) += v; });
    return dx;
}

// Backward through the whole encoder given dz. Accumulates into grads.
template <typename T>
void encoder_backward(const ForwardTrace<T>& trace, const MixerParams<T>& params,
                      const MixerConfig& cfg, const std::vector<T>& dz, Gradients<T>& grads) {
    // average pooling: dO[i][j] = dz[i] / t
    Mat<T> d_cur(cfg.feature_dim, cfg.time_dim);
    for (int i = 0; i < cfg.feature_dim; ++i) {
        const T v = dz[static_cast<size_t>(i)] / T(cfg.time_dim);
        T* row = d_cur.row(i);
        for (int j = 0; j < cfg.time_dim; ++j) row[j] = v;
    }
    for (size_t bi = params.blocks.size(); bi-- > 0;) {
        d_cur = block_backward(trace.blocks[bi], params.blocks[bi], grads.blocks[bi], cfg, d_cur);
    }
    if (cfg.input_mode == InputMode::kPatchEmbed) {
        // d_cur is the gradient at the patch-embedding output
        const int flat = cfg.patch_size * cfg.patch_size;
        Mat<T> cols = patchify(trace.pre_patch, InputMode::kPatchReshape, cfg.patch_size);
        std::vector<T> dcol(static_cast<size_t>(d_cur.rows)), in(static_cast<size_t>(flat));
        for (int j = 0; j < d_cur.cols; ++j) {
            for (int i = 0; i < d_cur.rows; ++i) dcol[static_cast<size_t>(i)] = d_cur.at(i, j);
            for (int i = 0; i < flat; ++i) in[static_cast<size_t>(i)] = cols.at(i, j);
            outer_accumulate(grads.patch_w, dcol.data(), in.data());
            for (int i = 0; i < d_cur.rows; ++i)
                grads.patch_b[static_cast<size_t>(i)] += dcol[static_cast<size_t>(i)];
        }
    }
}

} // namespace detail

template <typename T>
LossGrads<T> loss_and_gradients(const std::vector<std::pair<Mat<T>, int>>& batch,
                                const MixerParams<T>& params, const MixerConfig& cfg,
                                Rng* dropout_rng) {
    if (batch.empty()) throw std::runtime_error("loss_and_gradients: empty batch");
    if (!params.has_decoder())
        throw std::runtime_error("loss_and_gradients: parameters carry no decoder");
    LossGrads<T> out;
    out.grads = zeros_like(params);
    const T inv_batch = T(1) / T(batch.size());
    for (const auto& [x, label] : batch) {
        ForwardTrace<T> trace;
        std::vector<T> z = encoder_forward(x, params, cfg, &trace, dropout_rng);
        std::vector<T> logits = decoder_forward(z, params);
        out.loss += cross_entropy(logits, label) * inv_batch;

        std::vector<T> dlogits = softmax(logits);
        dlogits[static_cast<size_t>(label)] -= T(1);
        for (auto& v : dlogits) v *= inv_batch;

        for (size_t i = 0; i < dlogits.size(); ++i)
            out.grads.decoder_b[i] += dlogits[i];
        outer_accumulate(out.grads.decoder_w, dlogits.data(), z.data());
        std::vector<T> dz(z.size());
        matvec_transpose(params.decoder_w, dlogits.data(), dz.data());

        detail::encoder_backward(trace, params, cfg, dz, out.grads);
    }
    if (!std::isfinite(static_cast<double>(out.loss)))
        throw std::runtime_error("loss_and_gradients: non-finite loss");
    return out;
}

} // namespace qbye
