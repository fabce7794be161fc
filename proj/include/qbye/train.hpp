// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qbye/checkpoint.hpp"
#include "qbye/dataset.hpp"
#include "qbye/frontend.hpp"
#include "qbye/mixer.hpp"

namespace qbye {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 16;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    double snr_low_db = 4.0;
    double snr_high_db = 12.0;
    double noise_prob = 1.0;   // chance a training example gets noise mixed in
    std::string noise_dir;     // empty disables noise augmentation
    bool far_field = false;    // reserved; not implemented
    double stop_at_train_acc = 0.0; // early stop once clean train accuracy reaches this (0 = off)

    void validate() const;
};

struct NoisePool {
    std::vector<std::string> files; // sorted for reproducibility
};

// All 16 kHz mono PCM16 WAVs directly under dir.
NoisePool load_noise_pool(const std::string& dir);

struct AugmentInfo {
    bool noised = false;
    double snr_db = 0.0;
};

// load -> 1 s standardize -> (maybe) noise at uniform snr in [low, high] ->
// MFCC -> CMVN. Returns the feature matrix and the class index.
std::pair<FeatureMatrix, int> make_training_example(const Manifest& manifest, size_t entry_idx,
                                                    const NoisePool& noise,
                                                    const TrainConfig& tcfg,
                                                    const FrontendConfig& fcfg, Rng& rng,
                                                    AugmentInfo* info = nullptr);

struct AdamState {
    MixerParams<float> m;
    MixerParams<float> v;
    int64_t step = 0;
};

// Bias-corrected Adam update, elementwise over the whole parameter tree.
void adam_step(MixerParams<float>& params, const Gradients<float>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

struct TrainResult {
    Checkpoint best;                        // best validation accuracy (ties -> later epoch)
    std::vector<std::string> metrics_lines; // one JSON object per epoch
    int epochs_run = 0;
    double final_train_acc = 0.0; // clean-pipeline train accuracy of the retained checkpoint
};

TrainResult train(const Manifest& manifest, const TrainConfig& tcfg, const MixerConfig& mcfg,
                  const FrontendConfig& fcfg);

} // namespace qbye
