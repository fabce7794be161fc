// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#include "qbye/mixer.hpp"

namespace qbye {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::kHardswish: return "hardswish";
        case Activation::kGelu: return "gelu";
        case Activation::kRelu: return "relu";
        case Activation::kSilu: return "silu";
    }
    return "hardswish";
}

Activation activation_from_name(const std::string& name) {
    if (name == "hardswish") return Activation::kHardswish;
    if (name == "gelu") return Activation::kGelu;
    if (name == "relu") return Activation::kRelu;
    if (name == "silu") return Activation::kSilu;
    throw std::runtime_error("unknown activation: " + name);
}

const char* input_mode_name(InputMode m) {
    switch (m) {
        case InputMode::kDirect: return "direct";
        case InputMode::kPatchEmbed: return "patch_embed";
        case InputMode::kPatchReshape: return "patch_reshape";
    }
    return "direct";
}

InputMode input_mode_from_name(const std::string& name) {
    if (name == "direct") return InputMode::kDirect;
    if (name == "patch_embed") return InputMode::kPatchEmbed;
    if (name == "patch_reshape") return InputMode::kPatchReshape;
    throw std::runtime_error("unknown input mode: " + name);
}

int64_t count_params(const MixerConfig& cfg, bool include_decoder) {
    cfg.validate();
    const int64_t f = cfg.feature_dim, t = cfg.time_dim;
    const int64_t h = cfg.feature_hidden, g = cfg.time_hidden;
    int64_t per_block = (h * f + h) + (f * h + f)   // feature-mixing MLP
                      + (g * t + g) + (t * g + t)   // time-mixing MLP
                      + 2 * f + 2 * t;              // the two LayerNorms
    int64_t total = per_block * cfg.num_blocks;
    if (cfg.input_mode == InputMode::kPatchEmbed) {
        const int64_t flat = static_cast<int64_t>(cfg.patch_size) * cfg.patch_size;
        total += f * flat + f;
    }
    if (include_decoder && cfg.num_classes > 0) {
        total += static_cast<int64_t>(cfg.num_classes) * f + cfg.num_classes;
    }
    return total;
}

int64_t count_macs(const MixerConfig& cfg) {
    cfg.validate();
    const int64_t f = cfg.feature_dim, t = cfg.time_dim;
    const int64_t h = cfg.feature_hidden, g = cfg.time_hidden;
    int64_t per_block = h * f * t + f * h * t   // W1, W2 over t columns
                      + g * t * f + t * g * f;  // W3, W4 over f rows
    int64_t total = per_block * cfg.num_blocks;
    if (cfg.input_mode == InputMode::kPatchEmbed) {
        const int64_t flat = static_cast<int64_t>(cfg.patch_size) * cfg.patch_size;
        const int64_t n_patches = (f / cfg.patch_size) * (t / cfg.patch_size);
        total += f * flat * n_patches;
    }
    return total;
}

} // namespace qbye
