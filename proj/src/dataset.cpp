// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#include "qbye/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace qbye {

int Manifest::label_index(const std::string& label) const {
    auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || *it != label)
        throw std::runtime_error("unknown label: " + label);
    return static_cast<int>(it - labels.begin());
}

std::string Manifest::resolve_path(const ManifestEntry& e) const {
    fs::path p(e.audio_path);
    if (p.is_absolute() || base_dir.empty()) return e.audio_path;
    return (fs::path(base_dir) / p).string();
}

std::vector<size_t> Manifest::split_indices(const std::string& split) const {
    std::vector<size_t> idx;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == split) idx.push_back(i);
    return idx;
}

Manifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open manifest: " + path);
    Manifest m;
    m.base_dir = fs::path(path).parent_path().string();
    std::set<std::string> label_set;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("manifest " + path + " line " + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        ManifestEntry entry;
        for (const char* field : {"audio_path", "label", "split"}) {
            if (!j.contains(field) || !j.at(field).is_string())
                throw std::runtime_error("manifest " + path + " line " + std::to_string(line_no) +
                                         ": missing field \"" + field + "\"");
        }
        entry.audio_path = j.at("audio_path");
        entry.label = j.at("label");
        entry.split = j.at("split");
        if (entry.split != "train" && entry.split != "valid")
            throw std::runtime_error("manifest " + path + " line " + std::to_string(line_no) +
                                     ": split must be train or valid");
        label_set.insert(entry.label);
        m.entries.push_back(std::move(entry));
    }
    if (m.entries.empty()) throw std::runtime_error("empty manifest: " + path);
    m.labels.assign(label_set.begin(), label_set.end());
    return m;
}

AudioClip synth_tone_word(int class_id, Rng& rng) {
    // class identity = fundamental + harmonic amplitude profile
    const double f0 = 180.0 * std::pow(1.22, class_id);
    auto frac = [](double x) { return x - std::floor(x); };
    const double harm2 = 0.25 + 0.5 * frac(class_id * 0.37 + 0.11);
    const double harm3 = 0.15 + 0.4 * frac(class_id * 0.73 + 0.29);

    const double dur_s = rng.uniform(0.7, 1.3);
    const double onset_s = rng.uniform(0.0, 0.1);
    const double amp = rng.uniform(0.2, 0.4);
    const double ph1 = rng.uniform(0.0, 6.283185307179586);
    const double ph2 = rng.uniform(0.0, 6.283185307179586);
    const double ph3 = rng.uniform(0.0, 6.283185307179586);

    const size_t n = static_cast<size_t>(dur_s * kSampleRate);
    const size_t onset = static_cast<size_t>(onset_s * kSampleRate);
    const size_t fade = kSampleRate / 100; // 10 ms edges
    AudioClip clip;
    clip.samples.assign(n, 0.0f);
    const double w = 2.0 * 3.141592653589793 * f0 / kSampleRate;
    const double norm = 1.0 + harm2 + harm3;
    for (size_t i = onset; i < n; ++i) {
        const double k = static_cast<double>(i - onset);
        double v = std::sin(w * k + ph1) + harm2 * std::sin(2 * w * k + ph2) +
                   harm3 * std::sin(3 * w * k + ph3);
        double env = 1.0;
        if (i - onset < fade) env = static_cast<double>(i - onset) / fade;
        if (n - i <= fade) env = std::min(env, static_cast<double>(n - i) / fade);
        clip.samples[i] = static_cast<float>(amp / norm * env * v);
    }
    return clip;
}

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec,
                                            const std::string& out_dir) {
    if (spec.classes < 2)
        throw std::runtime_error("gen-synthetic: need at least 2 classes");
    if (spec.per_class < 1) throw std::runtime_error("gen-synthetic: per_class must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir))
        throw std::runtime_error("gen-synthetic: cannot create directory " + out_dir);

    const Rng root(spec.seed);
    SyntheticDataset out;
    out.manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
    std::ofstream mf(out.manifest_path, std::ios::trunc);
    if (!mf) throw std::runtime_error("gen-synthetic: cannot write " + out.manifest_path);

    const int n_valid = static_cast<int>(std::ceil(spec.per_class * spec.valid_fraction));
    char name[64];
    for (int k = 0; k < spec.classes; ++k) {
        for (int i = 0; i < spec.per_class; ++i) {
            Rng rng = root.child("clip", static_cast<uint64_t>(k), static_cast<uint64_t>(i));
            AudioClip clip = synth_tone_word(k, rng);
            std::snprintf(name, sizeof(name), "word%02d_%03d.wav", k, i);
            save_wav((fs::path(out_dir) / name).string(), clip);
            const bool valid = i >= spec.per_class - n_valid;
            nlohmann::json row{
                {"audio_path", name},
                {"label", "word" + std::string(k < 10 ? "0" : "") + std::to_string(k)},
                {"split", valid ? "valid" : "train"},
            };
            mf << row.dump() << "\n";
        }
    }
    mf.close();

    if (spec.noise_files > 0) {
        fs::create_directories(fs::path(out_dir) / "noise", ec);
        for (int i = 0; i < spec.noise_files; ++i) {
            Rng rng = root.child("noise", static_cast<uint64_t>(i));
            AudioClip noise;
            noise.samples.resize(5 * kSampleRate);
            for (auto& s : noise.samples) s = static_cast<float>(0.05 * rng.normal());
            std::snprintf(name, sizeof(name), "noise_%03d.wav", i);
            std::string p = (fs::path(out_dir) / "noise" / name).string();
            save_wav(p, noise);
            out.noise_paths.push_back(std::move(p));
        }
    }
    return out;
}

} // namespace qbye
