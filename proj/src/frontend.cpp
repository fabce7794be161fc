// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#include "qbye/frontend.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace qbye {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * kPi / static_cast<double>(len);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// index of a reflected read at position p (no edge duplication)
size_t reflect_index(long p, long n) {
    if (p < 0) p = -p;
    if (p >= n) p = 2 * n - 2 - p;
    return static_cast<size_t>(p);
}

struct MelBank {
    // per filter: first fft bin and triangle weights from there
    std::vector<int> start;
    std::vector<std::vector<double>> weights;
};

MelBank build_mel_bank(const FrontendConfig& cfg) {
    const int n_bins = cfg.fft_size / 2 + 1;
    const double f_max = kSampleRate / 2.0;
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(f_max);
    std::vector<double> edges(cfg.n_mels + 2);
    for (int m = 0; m < cfg.n_mels + 2; ++m) {
        edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));
    }
    MelBank bank;
    bank.start.resize(cfg.n_mels);
    bank.weights.resize(cfg.n_mels);
    const double bin_hz = static_cast<double>(kSampleRate) / cfg.fft_size;
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        int first = -1;
        std::vector<double> w;
        for (int k = 0; k < n_bins; ++k) {
            double f = k * bin_hz;
            double v = 0.0;
            if (f > lo && f < hi) {
                v = (f <= mid) ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
            }
            if (v > 0.0) {
                if (first < 0) first = k;
                w.push_back(v);
            } else if (first >= 0) {
                break;
            }
        }
        bank.start[m] = first < 0 ? 0 : first;
        bank.weights[m] = std::move(w);
    }
    return bank;
}

// orthonormal DCT-II matrix, n_mfcc x n_mels
Mat<double> build_dct(int n_mfcc, int n_mels) {
    Mat<double> dct(n_mfcc, n_mels);
    const double s0 = std::sqrt(1.0 / n_mels);
    const double sk = std::sqrt(2.0 / n_mels);
    for (int k = 0; k < n_mfcc; ++k) {
        for (int n = 0; n < n_mels; ++n) {
            dct.at(k, n) = (k == 0 ? s0 : sk) *
                           std::cos(kPi * k * (2.0 * n + 1.0) / (2.0 * n_mels));
        }
    }
    return dct;
}

} // namespace

void FrontendConfig::validate() const {
    if (n_mfcc > n_mels) throw std::runtime_error("frontend config: n_mfcc must be <= n_mels");
    if (fft_size < win_samples())
        throw std::runtime_error("frontend config: fft_size must cover the window");
    if (win_ms <= 0 || hop_ms <= 0) throw std::runtime_error("frontend config: bad window/hop");
}

FeatureMatrix compute_mfcc(const AudioClip& clip, const FrontendConfig& cfg) {
    cfg.validate();
    const long n = static_cast<long>(clip.samples.size());
    if (n != kSampleRate) {
        throw std::runtime_error("compute_mfcc: expected exactly 1 s of audio (16000 samples), got " +
                                 std::to_string(n));
    }
    const int win = cfg.win_samples();
    const int hop = cfg.hop_samples();
    const int pad = hop; // centered framing: hop samples mirrored on each side
    const int n_frames = static_cast<int>((n + 2 * pad - win) / hop) + 1;

    // pre-emphasis; first sample passes through unchanged
    std::vector<double> emph(n);
    emph[0] = clip.samples[0];
    for (long i = 1; i < n; ++i) {
        emph[i] = static_cast<double>(clip.samples[i]) - cfg.preemphasis * clip.samples[i - 1];
    }

    // periodic Hann
    std::vector<double> window(win);
    for (int i = 0; i < win; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / win);

    const MelBank bank = build_mel_bank(cfg);
    const Mat<double> dct = build_dct(cfg.n_mfcc, cfg.n_mels);

    FeatureMatrix out(cfg.n_mfcc, n_frames);
    std::vector<std::complex<double>> buf(cfg.fft_size);
    std::vector<double> power(cfg.fft_size / 2 + 1);
    std::vector<double> logmel(cfg.n_mels);

    for (int fr = 0; fr < n_frames; ++fr) {
        const long frame_start = static_cast<long>(fr) * hop - pad;
        for (int i = 0; i < win; ++i) {
            buf[i] = emph[reflect_index(frame_start + i, n)] * window[i];
        }
        for (int i = win; i < cfg.fft_size; ++i) buf[i] = 0.0;
        fft(buf);
        for (int k = 0; k <= cfg.fft_size / 2; ++k) power[k] = std::norm(buf[k]);

        for (int m = 0; m < cfg.n_mels; ++m) {
            double e = 0.0;
            const auto& w = bank.weights[m];
            const int s = bank.start[m];
            for (size_t i = 0; i < w.size(); ++i) e += w[i] * power[s + static_cast<int>(i)];
            logmel[m] = std::log(std::max(e, cfg.log_floor));
        }
        for (int k = 0; k < cfg.n_mfcc; ++k) {
            double acc = 0.0;
            const double* dr = dct.row(k);
            for (int m = 0; m < cfg.n_mels; ++m) acc += dr[m] * logmel[m];
            out.at(k, fr) = static_cast<float>(acc);
        }
    }
    return out;
}

FeatureMatrix apply_cmvn(const FeatureMatrix& feat, double eps) {
    FeatureMatrix out(feat.rows, feat.cols);
    for (int r = 0; r < feat.rows; ++r) {
        const float* src = feat.row(r);
        double mean = 0.0;
        for (int c = 0; c < feat.cols; ++c) mean += src[c];
        mean /= feat.cols;
        double var = 0.0;
        for (int c = 0; c < feat.cols; ++c) {
            double d = src[c] - mean;
            var += d * d;
        }
        var /= feat.cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        float* dst = out.row(r);
        for (int c = 0; c < feat.cols; ++c) {
            dst[c] = static_cast<float>((src[c] - mean) * inv);
        }
    }
    return out;
}

FeatureMatrix make_features(const AudioClip& clip, const FrontendConfig& cfg) {
    return apply_cmvn(compute_mfcc(clip, cfg), cfg.cmvn_eps);
}

} // namespace qbye
