// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#include "qbye/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace qbye {

namespace {

uint32_t read_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16le(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16le(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

} // namespace

AudioClip load_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open wav file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw std::runtime_error("malformed wav header: " + path);
    }

    bool have_fmt = false;
    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        uint32_t chunk_size = read_u32le(bytes.data() + pos + 4);
        size_t body = pos + 8;
        if (body + chunk_size > bytes.size()) {
            throw std::runtime_error("malformed wav header: truncated chunk in " + path);
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_size < 16) throw std::runtime_error("malformed wav header: short fmt chunk in " + path);
            format = read_u16le(bytes.data() + body);
            channels = read_u16le(bytes.data() + body + 2);
            rate = read_u32le(bytes.data() + body + 4);
            bits = read_u16le(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!have_fmt) throw std::runtime_error("malformed wav header: data before fmt in " + path);
            if (format != 1 || bits != 16)
                throw std::runtime_error("unsupported encoding (PCM16 required): " + path);
            if (channels != 1)
                throw std::runtime_error("unsupported channel count (" + std::to_string(channels) +
                                         "), mono required: " + path);
            if (rate != kSampleRate)
                throw std::runtime_error("unsupported sample rate (" + std::to_string(rate) +
                                         "), 16000 required: " + path);
            AudioClip clip;
            clip.sample_rate = kSampleRate;
            size_t n = chunk_size / 2;
            clip.samples.resize(n);
            for (size_t i = 0; i < n; ++i) {
                int16_t s = static_cast<int16_t>(read_u16le(bytes.data() + body + 2 * i));
                clip.samples[i] = static_cast<float>(s) / 32768.0f;
            }
            return clip;
        }
        // chunks are word aligned
        pos = body + chunk_size + (chunk_size & 1);
    }
    throw std::runtime_error("malformed wav header: no data chunk in " + path);
}

void save_wav(const std::string& path, const AudioClip& clip) {
    std::string out;
    uint32_t data_bytes = static_cast<uint32_t>(clip.samples.size() * 2);
    out.reserve(44 + data_bytes);
    out.append("RIFF");
    put_u32le(out, 36 + data_bytes);
    out.append("WAVE");
    out.append("fmt ");
    put_u32le(out, 16);
    put_u16le(out, 1); // PCM
    put_u16le(out, 1); // mono
    put_u32le(out, kSampleRate);
    put_u32le(out, kSampleRate * 2); // byte rate
    put_u16le(out, 2);               // block align
    put_u16le(out, 16);              // bits
    out.append("data");
    put_u32le(out, data_bytes);
    for (float s : clip.samples) {
        float x = s;
        if (x > 1.0f) x = 1.0f;
        if (x < -1.0f) x = -1.0f;
        int v = static_cast<int>(std::lrintf(x * 32767.0f));
        put_u16le(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write wav file: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("short write to wav file: " + path);
}

AudioClip standardize_duration(const AudioClip& clip, double target_s, Rng& rng) {
    if (clip.samples.empty()) throw std::runtime_error("standardize_duration: empty clip");
    if (target_s <= 0) throw std::runtime_error("standardize_duration: target must be positive");
    const size_t target = static_cast<size_t>(std::llround(target_s * clip.sample_rate));
    const size_t n = clip.samples.size();
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    if (n == target) {
        out.samples = clip.samples;
    } else if (n > target) {
        size_t start = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n - target)));
        out.samples.assign(clip.samples.begin() + start, clip.samples.begin() + start + target);
    } else {
        size_t pad = target - n;
        size_t left = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pad)));
        out.samples.assign(target, 0.0f);
        std::copy(clip.samples.begin(), clip.samples.end(), out.samples.begin() + left);
    }
    return out;
}

AudioClip standardize_duration_center(const AudioClip& clip, double target_s) {
    if (clip.samples.empty()) throw std::runtime_error("standardize_duration: empty clip");
    if (target_s <= 0) throw std::runtime_error("standardize_duration: target must be positive");
    const size_t target = static_cast<size_t>(std::llround(target_s * clip.sample_rate));
    const size_t n = clip.samples.size();
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    if (n == target) {
        out.samples = clip.samples;
    } else if (n > target) {
        size_t start = (n - target) / 2;
        out.samples.assign(clip.samples.begin() + start, clip.samples.begin() + start + target);
    } else {
        size_t left = (target - n) / 2;
        out.samples.assign(target, 0.0f);
        std::copy(clip.samples.begin(), clip.samples.end(), out.samples.begin() + left);
    }
    return out;
}

double mean_power(const std::vector<float>& samples) {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (float s : samples) acc += static_cast<double>(s) * s;
    return acc / static_cast<double>(samples.size());
}

NoiseMix mix_noise_at_snr_detailed(const AudioClip& signal, const AudioClip& noise,
                                   double snr_db, Rng& rng) {
    const size_t n = signal.samples.size();
    if (n == 0) throw std::runtime_error("mix_noise_at_snr: empty signal");
    if (noise.samples.size() < n)
        throw std::runtime_error("mix_noise_at_snr: noise shorter than signal");

    size_t offset = static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(noise.samples.size() - n)));

    double p_signal = mean_power(signal.samples);
    if (p_signal <= 0.0) throw std::runtime_error("mix_noise_at_snr: zero-power signal");
    double p_noise = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double v = noise.samples[offset + i];
        p_noise += v * v;
    }
    p_noise /= static_cast<double>(n);
    if (p_noise <= 0.0) throw std::runtime_error("mix_noise_at_snr: zero-power noise segment");

    // gain so that P_signal / (gain^2 * P_noise) == 10^(snr_db/10)
    double gain = std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));

    NoiseMix mix;
    mix.noise_offset = offset;
    mix.gain = gain;
    mix.mixed.sample_rate = signal.sample_rate;
    mix.mixed.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        mix.mixed.samples[i] = static_cast<float>(
            static_cast<double>(signal.samples[i]) + gain * noise.samples[offset + i]);
    }
    return mix;
}

AudioClip mix_noise_at_snr(const AudioClip& signal, const AudioClip& noise,
                           double snr_db, Rng& rng) {
    return mix_noise_at_snr_detailed(signal, noise, snr_db, rng).mixed;
}

} // namespace qbye
