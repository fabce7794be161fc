// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "qbye/audio.hpp"

namespace qbye {

struct ManifestEntry {
    std::string audio_path; // as written in the manifest
    std::string label;
    std::string split; // "train" or "valid"
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> labels; // sorted unique labels; index = class id
    std::string base_dir;            // manifest location, anchors relative paths

    int label_index(const std::string& label) const;
    std::string resolve_path(const ManifestEntry& e) const;
    std::vector<size_t> split_indices(const std::string& split) const;
};

// JSONL with one {"audio_path", "label", "split"} object per line. Labels map
// to contiguous class indices in lexicographic order. Malformed lines are
// reported with their line number.
Manifest load_manifest(const std::string& path);

// Deterministic desk-scale dataset: each class is a tone "word" with a fixed
// fundamental and harmonic profile; clips jitter duration, onset, amplitude
// and phase. Writes WAVs plus manifest.jsonl (and optional noise WAVs).
struct SyntheticSpec {
    int classes = 10;
    int per_class = 20;
    uint64_t seed = 0;
    double valid_fraction = 0.2;
    int noise_files = 0; // extra noise WAVs under <out_dir>/noise
};

struct SyntheticDataset {
    std::string manifest_path;
    std::vector<std::string> noise_paths;
};

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec,
                                            const std::string& out_dir);

// The clip synthesizer behind the generator, exposed for tests/fixtures.
AudioClip synth_tone_word(int class_id, Rng& rng);

} // namespace qbye
