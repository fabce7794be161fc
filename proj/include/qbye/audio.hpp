// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qbye/rng.hpp"

namespace qbye {

constexpr int kSampleRate = 16000;

struct AudioClip {
    std::vector<float> samples; // [-1, 1]
    int sample_rate = kSampleRate;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

// RIFF/WAVE, PCM16, mono, 16 kHz only. Samples decode as int16 / 32768.
AudioClip load_wav(const std::string& path);
void save_wav(const std::string& path, const AudioClip& clip);

// Force a clip to exactly target_s seconds: longer clips get a uniformly
// random contiguous crop, shorter ones are zero padded with a uniformly
// random left/right split.
AudioClip standardize_duration(const AudioClip& clip, double target_s, Rng& rng);

// Deterministic variant used for validation/eval paths: center crop, or pad
// split evenly (extra zero goes to the right).
AudioClip standardize_duration_center(const AudioClip& clip, double target_s);

struct NoiseMix {
    AudioClip mixed;
    size_t noise_offset = 0; // start of the noise segment used
    double gain = 0.0;       // scale applied to the noise segment
};

// mixed = signal + gain * noise[offset .. offset+len), with gain chosen so
// that 10*log10(P_signal / P_scaled_noise) == snr_db.
NoiseMix mix_noise_at_snr_detailed(const AudioClip& signal, const AudioClip& noise,
                                   double snr_db, Rng& rng);
AudioClip mix_noise_at_snr(const AudioClip& signal, const AudioClip& noise,
                           double snr_db, Rng& rng);

// mean of squared samples
double mean_power(const std::vector<float>& samples);

} // namespace qbye
