// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#include "qbye/runtime.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace qbye {

namespace {

const char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, size_t n) {
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (size_t i = 0; i < n; i += 3) {
        uint32_t v = static_cast<uint32_t>(data[i]) << 16;
        if (i + 1 < n) v |= static_cast<uint32_t>(data[i + 1]) << 8;
        if (i + 2 < n) v |= static_cast<uint32_t>(data[i + 2]);
        out.push_back(kB64Chars[(v >> 18) & 63]);
        out.push_back(kB64Chars[(v >> 12) & 63]);
        out.push_back(i + 1 < n ? kB64Chars[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < n ? kB64Chars[v & 63] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& s) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<unsigned char> out;
    int buf = 0, bits = 0;
    for (char c : s) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        int v = val(c);
        if (v < 0) throw std::runtime_error("invalid base64 payload");
        buf = (buf << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((buf >> bits) & 0xff));
        }
    }
    return out;
}

std::string encode_vectors(const std::vector<Embedding>& vectors) {
    std::vector<unsigned char> bytes;
    bytes.reserve(vectors.size() * (vectors.empty() ? 0 : vectors[0].size()) * sizeof(float));
    for (const auto& v : vectors) {
        const auto* p = reinterpret_cast<const unsigned char*>(v.data());
        bytes.insert(bytes.end(), p, p + v.size() * sizeof(float));
    }
    return base64_encode(bytes.data(), bytes.size());
}

std::vector<Embedding> decode_vectors(const std::string& b64, size_t count, size_t dim) {
    std::vector<unsigned char> bytes = base64_decode(b64);
    if (bytes.size() != count * dim * sizeof(float))
        throw std::runtime_error("embedding payload size mismatch");
    std::vector<Embedding> out(count, Embedding(dim));
    for (size_t i = 0; i < count; ++i)
        std::memcpy(out[i].data(), bytes.data() + i * dim * sizeof(float), dim * sizeof(float));
    return out;
}

nlohmann::json sequence_to_json(const EmbeddingSequence& seq) {
    const size_t dim = seq.vectors.empty() ? 0 : seq.vectors[0].size();
    return nlohmann::json{
        {"window_offsets_ms", seq.window_offsets_ms},
        {"dim", dim},
        {"count", seq.vectors.size()},
        {"embeddings_b64", encode_vectors(seq.vectors)},
    };
}

EmbeddingSequence sequence_from_json(const nlohmann::json& j) {
    EmbeddingSequence seq;
    seq.window_offsets_ms = j.at("window_offsets_ms").get<std::vector<double>>();
    const size_t count = j.at("count").get<size_t>();
    const size_t dim = j.at("dim").get<size_t>();
    if (count != seq.window_offsets_ms.size())
        throw std::runtime_error("embedding sequence: offset/count mismatch");
    seq.vectors = decode_vectors(j.at("embeddings_b64").get<std::string>(), count, dim);
    return seq;
}

} // namespace

EmbeddingSequence embed_utterance(const AudioClip& clip, const Model& model) {
    AudioClip padded;
    const AudioClip* src = &clip;
    if (clip.samples.size() < kWindowSamples) {
        if (clip.samples.empty()) throw std::runtime_error("embed_utterance: empty clip");
        padded = clip;
        padded.samples.resize(kWindowSamples, 0.0f); // right pad short clips
        src = &padded;
    }
    EmbeddingSequence seq;
    AudioClip window;
    window.sample_rate = src->sample_rate;
    for (size_t off = 0; off + kWindowSamples <= src->samples.size(); off += kStrideSamples) {
        window.samples.assign(src->samples.begin() + static_cast<long>(off),
                              src->samples.begin() + static_cast<long>(off + kWindowSamples));
        FeatureMatrix feat = make_features(window, model.frontend);
        seq.vectors.push_back(encoder_forward(feat, model.params, model.config));
        seq.window_offsets_ms.push_back(static_cast<double>(off) / 16.0);
    }
    return seq;
}

double cosine_distance(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size())
        throw std::runtime_error("cosine_distance: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb) + kCosineEps);
}

namespace {

// cosine over the window-aligned span query[q_start .. q_start + n_windows)
// against the whole enrollment concatenation
double span_distance(const std::vector<Embedding>& enr, const std::vector<Embedding>& query,
                     size_t q_start) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t w = 0; w < enr.size(); ++w) {
        const Embedding& e = enr[w];
        const Embedding& q = query[q_start + w];
        if (e.size() != q.size())
            throw std::runtime_error("match_score: embedding dimension mismatch");
        for (size_t i = 0; i < e.size(); ++i) {
            dot += static_cast<double>(e[i]) * q[i];
            na += static_cast<double>(e[i]) * e[i];
            nb += static_cast<double>(q[i]) * q[i];
        }
    }
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb) + kCosineEps);
}

} // namespace

MatchResult match_score(const EmbeddingSequence& enrollment, const EmbeddingSequence& query) {
    if (enrollment.vectors.empty() || query.vectors.empty())
        throw std::runtime_error("match_score: empty embedding sequence");
    MatchResult best;
    if (enrollment.vectors.size() <= query.vectors.size()) {
        const size_t positions = query.vectors.size() - enrollment.vectors.size() + 1;
        for (size_t p = 0; p < positions; ++p) {
            const double d = span_distance(enrollment.vectors, query.vectors, p);
            if (p == 0 || d < best.distance) {
                best.distance = d;
                best.offset = static_cast<int>(p);
            }
        }
    } else {
        // left-zero-pad the query: padded windows contribute nothing to the
        // dot product or the query norm, so score the overlapping tail only
        const size_t pad = enrollment.vectors.size() - query.vectors.size();
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (size_t w = 0; w < enrollment.vectors.size(); ++w) {
            const Embedding& e = enrollment.vectors[w];
            na += [&] {
                double s = 0.0;
                for (float v : e) s += static_cast<double>(v) * v;
                return s;
            }();
            if (w >= pad) {
                const Embedding& q = query.vectors[w - pad];
                if (e.size() != q.size())
                    throw std::runtime_error("match_score: embedding dimension mismatch");
                for (size_t i = 0; i < e.size(); ++i) {
                    dot += static_cast<double>(e[i]) * q[i];
                    nb += static_cast<double>(q[i]) * q[i];
                }
            }
        }
        best.distance = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb) + kCosineEps);
        best.offset = 0;
    }
    return best;
}

DetectionResult detect(const EnrollmentProfile& profile, const EmbeddingSequence& query,
                       double threshold, const std::string& model_fingerprint) {
    if (profile.model_fingerprint != model_fingerprint)
        throw FingerprintMismatchError("profile \"" + profile.keyword_id +
                                       "\" was enrolled with a different model (profile " +
                                       profile.model_fingerprint + ", loaded " +
                                       model_fingerprint + ")");
    if (profile.enrollments.empty())
        throw std::runtime_error("detect: profile has no enrollments");
    DetectionResult result;
    for (size_t i = 0; i < profile.enrollments.size(); ++i) {
        const MatchResult m = match_score(profile.enrollments[i], query);
        if (i == 0 || m.distance < result.score) {
            result.score = m.distance;
            result.best_enrollment_index = static_cast<int>(i);
            result.best_alignment_offset = m.offset;
        }
    }
    result.triggered = result.score < threshold;
    return result;
}

EnrollmentProfile enroll(const std::string& keyword_id, const std::vector<AudioClip>& clips,
                         const Model& model) {
    if (clips.empty()) throw std::runtime_error("enroll: need at least one clip");
    EnrollmentProfile profile;
    profile.keyword_id = keyword_id;
    profile.model_fingerprint = model.fingerprint;
    for (const AudioClip& clip : clips) profile.enrollments.push_back(embed_utterance(clip, model));
    return profile;
}

void save_profile(const EnrollmentProfile& profile, const std::string& path) {
    nlohmann::json j{
        {"format", "qbye-profile"},
        {"version", 1},
        {"keyword_id", profile.keyword_id},
        {"model_fingerprint", profile.model_fingerprint},
        {"enrollments", nlohmann::json::array()},
    };
    for (const auto& seq : profile.enrollments) j["enrollments"].push_back(sequence_to_json(seq));
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write profile: " + path);
    f << j.dump(2) << "\n";
}

EnrollmentProfile load_profile(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open profile: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("corrupt profile " + path + ": " + e.what());
    }
    if (j.value("format", "") != "qbye-profile")
        throw std::runtime_error("not a profile file: " + path);
    if (j.value("version", 0) != 1)
        throw std::runtime_error("unsupported profile version in " + path);
    EnrollmentProfile profile;
    profile.keyword_id = j.at("keyword_id");
    profile.model_fingerprint = j.at("model_fingerprint");
    for (const auto& seq : j.at("enrollments")) profile.enrollments.push_back(sequence_from_json(seq));
    if (profile.enrollments.empty())
        throw std::runtime_error("profile has no enrollments: " + path);
    return profile;
}

void save_embedding_sequence(const EmbeddingSequence& seq, const std::string& fingerprint,
                             const std::string& path) {
    nlohmann::json j{
        {"format", "qbye-embeddings"},
        {"version", 1},
        {"model_fingerprint", fingerprint},
    };
    j.update(sequence_to_json(seq));
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write embeddings: " + path);
    f << j.dump(2) << "\n";
}

StreamDetector::StreamDetector(EnrollmentProfile profile, double threshold, const Model& model)
    : profile_(std::move(profile)), threshold_(threshold), model_(model) {
    if (profile_.model_fingerprint != model_.fingerprint)
        throw FingerprintMismatchError("stream profile \"" + profile_.keyword_id +
                                       "\" does not match the loaded model");
    max_enroll_windows_ = 0;
    for (const auto& e : profile_.enrollments)
        max_enroll_windows_ = std::max(max_enroll_windows_, e.vectors.size());
    if (max_enroll_windows_ == 0)
        throw std::runtime_error("stream: profile has no enrollment windows");
    capacity_ = (max_enroll_windows_ - 1) * kStrideSamples + kWindowSamples;
    buffer_.reserve(capacity_);
}

std::vector<StreamEvent> StreamDetector::push(const float* samples, size_t count) {
    std::vector<StreamEvent> events;
    size_t consumed = 0;
    while (consumed < count) {
        // take just enough to reach the next emission point
        const size_t want = next_emit_ - total_pushed_;
        const size_t take = std::min(want, count - consumed);
        buffer_.insert(buffer_.end(), samples + consumed, samples + consumed + take);
        if (buffer_.size() > capacity_)
            buffer_.erase(buffer_.begin(),
                          buffer_.begin() + static_cast<long>(buffer_.size() - capacity_));
        total_pushed_ += take;
        consumed += take;
        if (total_pushed_ == next_emit_) {
            AudioClip window;
            window.samples = buffer_;
            EmbeddingSequence query = embed_utterance(window, model_);
            StreamEvent ev;
            ev.detection = detect(profile_, query, threshold_, model_.fingerprint);
            ev.time_ms = static_cast<double>(total_pushed_) / 16.0;
            ev.warm = query.vectors.size() >= max_enroll_windows_;
            events.push_back(std::move(ev));
            next_emit_ += kStrideSamples;
        }
    }
    return events;
}

} // namespace qbye
