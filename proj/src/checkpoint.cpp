// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#include "qbye/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace qbye {

namespace {

constexpr char kMagic[4] = {'Q', 'B', 'E', 'M'};

void append_u32le(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64le(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t read_u32le(const unsigned char* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}

uint64_t read_u64le(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

} // namespace

nlohmann::json mixer_config_to_json(const MixerConfig& cfg) {
    return nlohmann::json{
        {"feature_dim", cfg.feature_dim},
        {"time_dim", cfg.time_dim},
        {"feature_hidden", cfg.feature_hidden},
        {"time_hidden", cfg.time_hidden},
        {"num_blocks", cfg.num_blocks},
        {"activation", activation_name(cfg.activation)},
        {"dropout", cfg.dropout},
        {"input_mode", input_mode_name(cfg.input_mode)},
        {"patch_size", cfg.patch_size},
        {"num_classes", cfg.num_classes},
    };
}

MixerConfig mixer_config_from_json(const nlohmann::json& j) {
    MixerConfig cfg;
    cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
    cfg.time_dim = j.value("time_dim", cfg.time_dim);
    cfg.feature_hidden = j.value("feature_hidden", cfg.feature_hidden);
    cfg.time_hidden = j.value("time_hidden", cfg.time_hidden);
    cfg.num_blocks = j.value("num_blocks", cfg.num_blocks);
    if (j.contains("activation")) cfg.activation = activation_from_name(j.at("activation"));
    cfg.dropout = j.value("dropout", cfg.dropout);
    if (j.contains("input_mode")) cfg.input_mode = input_mode_from_name(j.at("input_mode"));
    cfg.patch_size = j.value("patch_size", cfg.patch_size);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.validate();
    return cfg;
}

nlohmann::json frontend_config_to_json(const FrontendConfig& cfg) {
    return nlohmann::json{
        {"win_ms", cfg.win_ms},
        {"hop_ms", cfg.hop_ms},
        {"n_mels", cfg.n_mels},
        {"n_mfcc", cfg.n_mfcc},
        {"fft_size", cfg.fft_size},
        {"preemphasis", cfg.preemphasis},
        {"log_floor", cfg.log_floor},
        {"cmvn_eps", cfg.cmvn_eps},
    };
}

FrontendConfig frontend_config_from_json(const nlohmann::json& j) {
    FrontendConfig cfg;
    cfg.win_ms = j.value("win_ms", cfg.win_ms);
    cfg.hop_ms = j.value("hop_ms", cfg.hop_ms);
    cfg.n_mels = j.value("n_mels", cfg.n_mels);
    cfg.n_mfcc = j.value("n_mfcc", cfg.n_mfcc);
    cfg.fft_size = j.value("fft_size", cfg.fft_size);
    cfg.preemphasis = j.value("preemphasis", cfg.preemphasis);
    cfg.log_floor = j.value("log_floor", cfg.log_floor);
    cfg.cmvn_eps = j.value("cmvn_eps", cfg.cmvn_eps);
    cfg.validate();
    return cfg;
}

uint64_t params_fingerprint(const MixerParams<float>& params) {
    uint64_t h = 0xcbf29ce484222325ull;
    visit_params(params, [&h](const std::string&, int, int, const std::vector<float>& v) {
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(v.data());
        const size_t n = v.size() * sizeof(float);
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    });
    return h;
}

std::string fingerprint_hex(uint64_t fp) {
    static const char* hex = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = hex[fp & 0xf];
        fp >>= 4;
    }
    return s;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json tensors = nlohmann::json::array();
    std::string payload;
    visit_params(ckpt.params, [&](const std::string& name, int rows, int cols,
                                  const std::vector<float>& v) {
        nlohmann::json t{{"name", name}};
        if (cols > 0) {
            t["shape"] = {rows, cols};
        } else {
            t["shape"] = {rows};
        }
        tensors.push_back(std::move(t));
        const size_t off = payload.size();
        payload.resize(off + v.size() * sizeof(float));
        std::memcpy(payload.data() + off, v.data(), v.size() * sizeof(float));
    });

    nlohmann::json header{
        {"model", mixer_config_to_json(ckpt.model)},
        {"frontend", frontend_config_to_json(ckpt.frontend)},
        {"labels", ckpt.labels},
        {"train_step", ckpt.train_step},
        {"tensors", tensors},
    };
    const std::string header_str = header.dump();

    std::string out;
    out.reserve(16 + header_str.size() + payload.size());
    out.append(kMagic, 4);
    append_u32le(out, kCheckpointVersion);
    append_u64le(out, header_str.size());
    out.append(header_str);
    out.append(payload);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw std::runtime_error("bad magic in checkpoint: " + path);
    const uint32_t version = read_u32le(bytes.data() + 4);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                                 " in " + path);
    const uint64_t header_len = read_u64le(bytes.data() + 8);
    if (16 + header_len > bytes.size())
        throw std::runtime_error("truncated checkpoint header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16,
                                       bytes.begin() + 16 + static_cast<long>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("corrupt checkpoint header in " + path + ": " + e.what());
    }

    Checkpoint ckpt;
    ckpt.model = mixer_config_from_json(header.at("model"));
    ckpt.frontend = frontend_config_from_json(header.at("frontend"));
    ckpt.labels = header.value("labels", std::vector<std::string>{});
    ckpt.train_step = header.value("train_step", int64_t{0});

    // allocate the parameter tree from the config, then fill in declared order
    ckpt.params = alloc_params<float>(ckpt.model);

    const auto& tensors = header.at("tensors");
    size_t ti = 0;
    size_t offset = 16 + static_cast<size_t>(header_len);
    visit_params(ckpt.params, [&](const std::string& name, int rows, int cols,
                                  std::vector<float>& v) {
        if (ti >= tensors.size())
            throw std::runtime_error("checkpoint missing tensor " + name + ": " + path);
        const auto& t = tensors.at(ti++);
        if (t.at("name").get<std::string>() != name)
            throw std::runtime_error("checkpoint tensor order mismatch at " + name + ": " + path);
        std::vector<int> shape = t.at("shape").get<std::vector<int>>();
        size_t declared = 1;
        for (int s : shape) declared *= static_cast<size_t>(s);
        const bool shape_ok = (cols > 0)
            ? (shape.size() == 2 && shape[0] == rows && shape[1] == cols)
            : (shape.size() == 1 && shape[0] == rows);
        if (!shape_ok || declared != v.size())
            throw std::runtime_error("checkpoint tensor shape mismatch at " + name + ": " + path);
        const size_t nbytes = v.size() * sizeof(float);
        if (offset + nbytes > bytes.size())
            throw std::runtime_error("truncated tensor region at " + name + ": " + path);
        std::memcpy(v.data(), bytes.data() + offset, nbytes);
        offset += nbytes;
    });
    if (ti != tensors.size())
        throw std::runtime_error("checkpoint declares extra tensors: " + path);
    if (offset != bytes.size())
        throw std::runtime_error("checkpoint has trailing bytes: " + path);
    return ckpt;
}

} // namespace qbye
