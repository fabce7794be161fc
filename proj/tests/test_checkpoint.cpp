// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "qbye/checkpoint.hpp"
#include "test_util.hpp"

using namespace qbye;
using qbye::test::TempDir;
using qbye::test::read_file;

namespace {

Checkpoint make_checkpoint(uint64_t seed) {
    Checkpoint ckpt;
    ckpt.model.feature_dim = 81;
    ckpt.model.time_dim = 81;
    ckpt.model.feature_hidden = 8;
    ckpt.model.time_hidden = 8;
    ckpt.model.num_blocks = 2;
    ckpt.model.num_classes = 5;
    ckpt.labels = {"a", "b", "c", "d", "e"};
    ckpt.train_step = 1234;
    Rng rng(seed);
    ckpt.params = init_params<float>(ckpt.model, rng);
    return ckpt;
}

} // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    TempDir dir("ckpt");
    Checkpoint ckpt = make_checkpoint(7);
    save_checkpoint(ckpt, dir.str("m.qbem"));
    Checkpoint back = load_checkpoint(dir.str("m.qbem"));

    CHECK(back.labels == ckpt.labels);
    CHECK(back.train_step == ckpt.train_step);
    CHECK(back.model.num_blocks == ckpt.model.num_blocks);
    CHECK(back.model.num_classes == ckpt.model.num_classes);

    std::vector<const std::vector<float>*> a, b;
    visit_params(ckpt.params, [&](const std::string&, int, int, const std::vector<float>& v) {
        a.push_back(&v);
    });
    visit_params(back.params, [&](const std::string&, int, int, const std::vector<float>& v) {
        b.push_back(&v);
    });
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) REQUIRE(*a[i] == *b[i]); // bitwise float equality

    // saving the loaded copy reproduces the file byte for byte
    save_checkpoint(back, dir.str("m2.qbem"));
    CHECK(read_file(dir.str("m.qbem")) == read_file(dir.str("m2.qbem")));
}

TEST_CASE("inference checkpoints (no decoder) round trip too") {
    TempDir dir("ckpt_inf");
    Checkpoint ckpt = make_checkpoint(9);
    ckpt.model.num_classes = 0;
    Rng rng(9);
    ckpt.params = init_params<float>(ckpt.model, rng);
    REQUIRE(!ckpt.params.has_decoder());
    save_checkpoint(ckpt, dir.str("inf.qbem"));
    Checkpoint back = load_checkpoint(dir.str("inf.qbem"));
    CHECK(!back.params.has_decoder());
    CHECK(params_fingerprint(back.params) == params_fingerprint(ckpt.params));
}

TEST_CASE("corrupt magic is rejected") {
    TempDir dir("ckpt_bad");
    Checkpoint ckpt = make_checkpoint(1);
    save_checkpoint(ckpt, dir.str("m.qbem"));
    std::string bytes = read_file(dir.str("m.qbem"));
    bytes[0] = 'X';
    std::ofstream f(dir.str("bad.qbem"), std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.str("bad.qbem")), doctest::Contains("bad magic"),
                         std::runtime_error);
}

TEST_CASE("version mismatch is rejected") {
    TempDir dir("ckpt_ver");
    Checkpoint ckpt = make_checkpoint(1);
    save_checkpoint(ckpt, dir.str("m.qbem"));
    std::string bytes = read_file(dir.str("m.qbem"));
    bytes[4] = 99; // bump the little-endian version field
    std::ofstream f(dir.str("v.qbem"), std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.str("v.qbem")),
                         doctest::Contains("unsupported checkpoint version"), std::runtime_error);
}

TEST_CASE("truncated tensor region is rejected") {
    TempDir dir("ckpt_trunc");
    Checkpoint ckpt = make_checkpoint(1);
    save_checkpoint(ckpt, dir.str("m.qbem"));
    std::string bytes = read_file(dir.str("m.qbem"));
    bytes.resize(bytes.size() - 64);
    std::ofstream f(dir.str("t.qbem"), std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.str("t.qbem")), doctest::Contains("truncated"),
                         std::runtime_error);
}

TEST_CASE("trailing bytes are rejected") {
    TempDir dir("ckpt_trail");
    Checkpoint ckpt = make_checkpoint(1);
    save_checkpoint(ckpt, dir.str("m.qbem"));
    std::ofstream f(dir.str("m.qbem"), std::ios::binary | std::ios::app);
    f << "junk";
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.str("m.qbem")), doctest::Contains("trailing"),
                         std::runtime_error);
}

TEST_CASE("fingerprint tracks tensor content") {
    Checkpoint a = make_checkpoint(5);
    Checkpoint b = make_checkpoint(5);
    CHECK(params_fingerprint(a.params) == params_fingerprint(b.params));
    b.params.blocks[0].w1.at(0, 0) += 1e-3f;
    CHECK(params_fingerprint(a.params) != params_fingerprint(b.params));
    CHECK(fingerprint_hex(params_fingerprint(a.params)).size() == 16);
}
