// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qbye/audio.hpp"
#include "qbye/checkpoint.hpp"
#include "qbye/frontend.hpp"
#include "qbye/mixer.hpp"

namespace qbye {

constexpr int kWindowSamples = 16000;  // 1 s analysis window
constexpr int kStrideSamples = 1600;   // 100 ms hop between windows
constexpr double kCosineEps = 1e-12;

// Loaded model plus the fingerprint that binds profiles to it.
struct Model {
    MixerConfig config;
    FrontendConfig frontend;
    MixerParams<float> params;
    std::string fingerprint;

    static Model from_checkpoint(const Checkpoint& ckpt) {
        return Model{ckpt.model, ckpt.frontend, ckpt.params,
                     fingerprint_hex(params_fingerprint(ckpt.params))};
    }
};

struct EmbeddingSequence {
    std::vector<Embedding> vectors;        // one per 1 s window, each f-dim
    std::vector<double> window_offsets_ms; // strictly increasing by 100
};

struct EnrollmentProfile {
    std::string keyword_id;
    std::vector<EmbeddingSequence> enrollments;
    std::string model_fingerprint; // hex, from the checkpoint tensors
};

struct DetectionResult {
    double score = 2.0; // min cosine distance over enrollments, in [0, 2]
    bool triggered = false;
    int best_enrollment_index = -1;
    int best_alignment_offset = 0; // window offset within the query
};

// Profiles embedded under a different model are rejected with this.
class FingerprintMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Slide a 1 s window with 100 ms stride over the clip and embed each window.
// Clips shorter than 1 s are right-zero-padded to a single window.
EmbeddingSequence embed_utterance(const AudioClip& clip, const Model& model);

// 1 - a.b / (|a||b| + eps), in [0, 2].
double cosine_distance(const std::vector<float>& a, const std::vector<float>& b);

struct MatchResult {
    double distance = 2.0;
    int offset = 0; // window-aligned offset of the enrollment within the query
};

// Compare window-aligned concatenations. An enrollment no longer than the
// query slides across it and the minimum distance wins (first such offset on
// ties); a longer enrollment gets the query left-zero-padded to its length.
MatchResult match_score(const EmbeddingSequence& enrollment, const EmbeddingSequence& query);

// Minimum match_score over the profile's enrollments; triggers strictly
// below the threshold.
DetectionResult detect(const EnrollmentProfile& profile, const EmbeddingSequence& query,
                       double threshold, const std::string& model_fingerprint);

EnrollmentProfile enroll(const std::string& keyword_id, const std::vector<AudioClip>& clips,
                         const Model& model);

// JSON profile file with a base64 float32 payload per enrollment; versioned.
void save_profile(const EnrollmentProfile& profile, const std::string& path);
EnrollmentProfile load_profile(const std::string& path);

// Same format for standalone embedding sequences (the `embed` command).
void save_embedding_sequence(const EmbeddingSequence& seq, const std::string& fingerprint,
                             const std::string& path);

struct StreamEvent {
    DetectionResult detection;
    double time_ms = 0.0; // stream time at emission (end of buffered audio)
    bool warm = false;    // buffer holds as many windows as the longest enrollment
};

// Streaming detector: keeps a rolling audio buffer sized to the longest
// enrollment and emits one detection per 100 ms of new audio (the first one
// once a full window has arrived). Once warm the buffered query is at least
// as long as every enrollment, so no padding path is hit.
class StreamDetector {
public:
    StreamDetector(EnrollmentProfile profile, double threshold, const Model& model);

    std::vector<StreamEvent> push(const float* samples, size_t count);
    std::vector<StreamEvent> push(const std::vector<float>& samples) {
        return push(samples.data(), samples.size());
    }

    size_t buffer_capacity() const { return capacity_; }

private:
    EnrollmentProfile profile_;
    double threshold_;
    const Model& model_;
    size_t max_enroll_windows_;
    size_t capacity_;       // samples
    std::vector<float> buffer_;
    size_t total_pushed_ = 0;
    size_t next_emit_ = kWindowSamples;
};

} // namespace qbye
