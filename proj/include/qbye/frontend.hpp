// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include "qbye/audio.hpp"
#include "qbye/mat.hpp"

namespace qbye {

// 1 s of 16 kHz audio -> 81 coefficients x 81 frames.
//
// Pipeline: pre-emphasis, reflect padding of hop/2 on each side (centered
// frames, 81 of them), periodic Hann window, magnitude-squared FFT, mel
// filterbank (HTK scale, 0..8000 Hz), natural log with floor, orthonormal
// DCT-II keeping all coefficients.
struct FrontendConfig {
    double win_ms = 25.0;
    double hop_ms = 12.5;
    int n_mels = 81;
    int n_mfcc = 81;
    int fft_size = 512;
    double preemphasis = 0.97;
    double log_floor = 1e-10;
    double cmvn_eps = 1e-8;

    int win_samples() const { return static_cast<int>(win_ms * kSampleRate / 1000.0 + 0.5); }
    int hop_samples() const { return static_cast<int>(hop_ms * kSampleRate / 1000.0 + 0.5); }
    void validate() const;
};

// rows = coefficient index (f), cols = frame index (t)
using FeatureMatrix = MatF;

FeatureMatrix compute_mfcc(const AudioClip& clip, const FrontendConfig& cfg);

// Per-coefficient standardization over the frame axis:
// (x - mean_row) / sqrt(var_row + eps).
FeatureMatrix apply_cmvn(const FeatureMatrix& feat, double eps);

// compute_mfcc followed by apply_cmvn with cfg.cmvn_eps.
FeatureMatrix make_features(const AudioClip& clip, const FrontendConfig& cfg);

} // namespace qbye
