// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbye/frontend.hpp"
#include "qbye/mixer.hpp"

#include "json.hpp"

namespace qbye {

// Binary model file: magic "QBEM", u32 version, u64 header length, UTF-8 JSON
// header (configs, label table, train step, tensor table), then the tensors
// as raw little-endian float32 in the order the header declares.
constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    MixerConfig model;
    FrontendConfig frontend;
    std::vector<std::string> labels; // class index -> label, sorted
    int64_t train_step = 0;
    MixerParams<float> params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a over the float32 tensor bytes in checkpoint order; binds enrollment
// profiles to the exact model they were embedded with.
uint64_t params_fingerprint(const MixerParams<float>& params);
std::string fingerprint_hex(uint64_t fp);

nlohmann::json mixer_config_to_json(const MixerConfig& cfg);
MixerConfig mixer_config_from_json(const nlohmann::json& j);
nlohmann::json frontend_config_to_json(const FrontendConfig& cfg);
FrontendConfig frontend_config_from_json(const nlohmann::json& j);

} // namespace qbye
