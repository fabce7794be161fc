// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "qbye/audio.hpp"
#include "test_util.hpp"

using namespace qbye;
using qbye::test::TempDir;
using qbye::test::make_tone;

namespace {

// hand-rolled PCM16 wav writer so load_wav is tested against foreign bytes
void write_pcm16_wav(const std::string& path, const std::vector<int16_t>& samples,
                     uint16_t channels = 1, uint32_t rate = 16000, uint16_t format = 1) {
    std::string out;
    auto u32 = [&out](uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    auto u16 = [&out](uint16_t v) {
        for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
    out.append("RIFF");
    u32(36 + data_bytes);
    out.append("WAVE");
    out.append("fmt ");
    u32(16);
    u16(format);
    u16(channels);
    u32(rate);
    u32(rate * channels * 2);
    u16(static_cast<uint16_t>(channels * 2));
    u16(16);
    out.append("data");
    u32(data_bytes);
    for (int16_t s : samples) u16(static_cast<uint16_t>(s));
    std::ofstream f(path, std::ios::binary);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

} // namespace

TEST_CASE("load_wav decodes pcm16 as int16/32768") {
    TempDir dir("wav");
    std::vector<int16_t> samples(16000, 0);
    samples[0] = 16384;
    samples[1] = -32768;
    write_pcm16_wav(dir.str("a.wav"), samples);
    AudioClip clip = load_wav(dir.str("a.wav"));
    REQUIRE(clip.samples.size() == 16000);
    CHECK(clip.samples[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(clip.samples[1] == doctest::Approx(-1.0).epsilon(1e-9));
    for (size_t i = 2; i < clip.samples.size(); ++i) REQUIRE(clip.samples[i] == 0.0f);
}

TEST_CASE("load_wav rejects unsupported files with distinct errors") {
    TempDir dir("wavbad");
    std::vector<int16_t> samples(100, 0);

    write_pcm16_wav(dir.str("stereo.wav"), samples, 2);
    CHECK_THROWS_WITH_AS(load_wav(dir.str("stereo.wav")),
                         doctest::Contains("unsupported channel count"), std::runtime_error);

    write_pcm16_wav(dir.str("rate.wav"), samples, 1, 8000);
    CHECK_THROWS_WITH_AS(load_wav(dir.str("rate.wav")),
                         doctest::Contains("unsupported sample rate"), std::runtime_error);

    write_pcm16_wav(dir.str("float.wav"), samples, 1, 16000, 3);
    CHECK_THROWS_WITH_AS(load_wav(dir.str("float.wav")), doctest::Contains("unsupported encoding"),
                         std::runtime_error);

    std::ofstream bad(dir.str("bad.wav"), std::ios::binary);
    bad << "not a riff file at all";
    bad.close();
    CHECK_THROWS_WITH_AS(load_wav(dir.str("bad.wav")), doctest::Contains("malformed wav header"),
                         std::runtime_error);

    CHECK_THROWS_AS(load_wav(dir.str("missing.wav")), std::runtime_error);
}

TEST_CASE("save_wav/load_wav round trip") {
    TempDir dir("wavrt");
    AudioClip clip = make_tone(440.0, 0.45, 12345);
    save_wav(dir.str("t.wav"), clip);
    AudioClip back = load_wav(dir.str("t.wav"));
    REQUIRE(back.samples.size() == clip.samples.size());
    for (size_t i = 0; i < clip.samples.size(); ++i)
        REQUIRE(back.samples[i] == doctest::Approx(clip.samples[i]).epsilon(1e-4));
}

TEST_CASE("standardize_duration keeps exact-length clips") {
    Rng rng(1);
    AudioClip clip = make_tone(100.0, 0.3, 16000);
    AudioClip out = standardize_duration(clip, 1.0, rng);
    CHECK(out.samples == clip.samples);
}

TEST_CASE("standardize_duration pads short clips with a contiguous payload") {
    Rng rng(7);
    AudioClip clip;
    clip.samples.resize(8000);
    for (size_t i = 0; i < clip.samples.size(); ++i)
        clip.samples[i] = static_cast<float>(i % 100) / 200.0f + 0.01f; // all nonzero
    AudioClip out = standardize_duration(clip, 1.0, rng);
    REQUIRE(out.samples.size() == 16000);
    size_t first = 0;
    while (first < out.samples.size() && out.samples[first] == 0.0f) ++first;
    size_t last = out.samples.size();
    while (last > first && out.samples[last - 1] == 0.0f) --last;
    REQUIRE(last - first == 8000);
    for (size_t i = 0; i < 8000; ++i) REQUIRE(out.samples[first + i] == clip.samples[i]);
}

TEST_CASE("standardize_duration crops long clips reproducibly") {
    AudioClip clip = make_tone(100.0, 0.3, 32000);
    Rng rng_a(123), rng_b(123), rng_c(124);
    AudioClip a = standardize_duration(clip, 1.0, rng_a);
    AudioClip b = standardize_duration(clip, 1.0, rng_b);
    REQUIRE(a.samples.size() == 16000);
    CHECK(a.samples == b.samples);
    // crop is a contiguous subsequence of the input
    bool found = false;
    for (size_t s = 0; s + 16000 <= clip.samples.size() && !found; ++s) {
        if (std::memcmp(clip.samples.data() + s, a.samples.data(), 16000 * sizeof(float)) == 0)
            found = true;
    }
    CHECK(found);
    AudioClip c = standardize_duration(clip, 1.0, rng_c);
    CHECK(a.samples != c.samples); // different seed, different crop (for this fixture)
}

TEST_CASE("standardize_duration rejects empty input") {
    Rng rng(0);
    AudioClip clip;
    CHECK_THROWS_AS(standardize_duration(clip, 1.0, rng), std::runtime_error);
}

TEST_CASE("mix_noise_at_snr equal powers at 0 dB doubles the signal") {
    Rng rng(5);
    AudioClip s = make_tone(440.0, 0.4, 16000);
    AudioClip out = mix_noise_at_snr(s, s, 0.0, rng);
    REQUIRE(out.samples.size() == s.samples.size());
    for (size_t i = 0; i < s.samples.size(); ++i)
        REQUIRE(out.samples[i] == doctest::Approx(2.0f * s.samples[i]).epsilon(1e-6));
}

TEST_CASE("mix_noise_at_snr gain follows sqrt(Ps/(Pn 10^(snr/10)))") {
    Rng rng(5);
    AudioClip s = make_tone(440.0, 0.2, 16000);
    AudioClip noise = make_tone(440.0, 0.4, 16000); // P_noise = 4 P_signal
    NoiseMix mix = mix_noise_at_snr_detailed(s, noise, 0.0, rng);
    CHECK(mix.gain == doctest::Approx(0.5).epsilon(1e-9));

    // equal powers at 6 dB: gain = 10^(-0.3)
    NoiseMix mix6 = mix_noise_at_snr_detailed(s, s, 6.0, rng);
    CHECK(mix6.gain == doctest::Approx(std::pow(10.0, -0.3)).epsilon(1e-12));
    CHECK(mix6.gain == doctest::Approx(0.5011872336272722).epsilon(1e-12));
}

TEST_CASE("mix_noise_at_snr hits the requested snr within 1e-6 dB") {
    Rng master(99);
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng = master.child("trial", static_cast<uint64_t>(trial));
        AudioClip s = make_tone(rng.uniform(80.0, 4000.0), rng.uniform(0.05, 0.6), 16000);
        AudioClip noise;
        noise.samples.resize(16000 + static_cast<size_t>(rng.uniform_int(0, 32000)));
        for (auto& v : noise.samples) v = static_cast<float>(rng.normal() * rng.uniform(0.01, 0.5));
        const double snr_db = rng.uniform(-10.0, 20.0);
        NoiseMix mix = mix_noise_at_snr_detailed(s, noise, snr_db, rng);

        // measure from the actual scaled segment
        double p_sig = mean_power(s.samples);
        double p_noise = 0.0;
        for (size_t i = 0; i < s.samples.size(); ++i) {
            const double v = mix.gain * noise.samples[mix.noise_offset + i];
            p_noise += v * v;
        }
        p_noise /= static_cast<double>(s.samples.size());
        const double measured = 10.0 * std::log10(p_sig / p_noise);
        REQUIRE(std::abs(measured - snr_db) < 1e-6);
    }
}

TEST_CASE("mix_noise_at_snr rejects degenerate inputs") {
    Rng rng(0);
    AudioClip zero;
    zero.samples.assign(16000, 0.0f);
    AudioClip tone = make_tone(440.0, 0.3, 16000);
    CHECK_THROWS_WITH_AS(mix_noise_at_snr(zero, tone, 6.0, rng),
                         doctest::Contains("zero-power signal"), std::runtime_error);
    CHECK_THROWS_WITH_AS(mix_noise_at_snr(tone, zero, 6.0, rng),
                         doctest::Contains("zero-power noise"), std::runtime_error);
    AudioClip shorter = make_tone(440.0, 0.3, 8000);
    CHECK_THROWS_WITH_AS(mix_noise_at_snr(tone, shorter, 6.0, rng),
                         doctest::Contains("noise shorter"), std::runtime_error);
}
