#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rarec/checkpoint.hpp"
#include "rarec/ops.hpp"

using namespace rarec;

namespace {

std::string temp_stem(const char* tag) {
    auto dir = std::filesystem::temp_directory_path() / "rarec_ckpt_tests";
    std::filesystem::create_directories(dir);
    return (dir / tag).string();
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise after float32 rounding") {
    Checkpoint ck;
    ck.tensors.emplace("enc.a", init_trunc_normal({3, 4}, -0.02, 0.02, 0.01, 1));
    ck.tensors.emplace("enc.b", Tensor::from({2}, {1.25, -7.5}));
    ck.tensors.emplace("id.t", init_trunc_normal({5}, -0.02, 0.02, 0.01, 2));
    ck.set_meta("seed", "7");
    snap_to_f32(ck.tensors);

    const std::string stem = temp_stem("roundtrip");
    save_checkpoint(ck, stem);
    Checkpoint back = load_checkpoint(stem);
    CHECK(back.meta_or("seed", "") == "7");
    REQUIRE(back.tensors.size() == 3);
    for (const auto& [name, t] : ck.tensors) {
        CHECK(back.tensors.at(name).shape() == t.shape());
        CHECK(back.tensors.at(name).values() == t.values());
    }

    // saving the loaded copy reproduces identical files
    save_checkpoint(back, stem + "_again");
    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    CHECK(slurp(stem + ".tensors") == slurp(stem + "_again.tensors"));
}

TEST_CASE("checkpoint blob corruption is detected on load") {
    Checkpoint ck;
    ck.tensors.emplace("enc.a", Tensor::from({4}, {1, 2, 3, 4}));
    const std::string stem = temp_stem("corrupt");
    save_checkpoint(ck, stem);

    std::fstream f(stem + ".tensors", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(2);
    char junk = 0x5a;
    f.write(&junk, 1);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(stem), CheckpointError);
}

TEST_CASE("component checksums split by name prefix") {
    ParameterSet set;
    set.emplace("enc.a", Tensor::from({1}, {1.0}));
    set.emplace("enc.b", Tensor::from({1}, {2.0}));
    set.emplace("id.t", Tensor::from({1}, {3.0}));
    auto sums = component_checksums(set);
    REQUIRE(sums.size() == 2);
    CHECK(sums.count("enc") == 1);
    CHECK(sums.count("id") == 1);

    ParameterSet enc_only{{"enc.a", set.at("enc.a")}, {"enc.b", set.at("enc.b")}};
    CHECK(sums.at("enc") == content_checksum(enc_only));
}

TEST_CASE("snap_to_f32 is idempotent") {
    ParameterSet set{{"x", Tensor::from({3}, {0.1, 0.2, 0.3})}};
    snap_to_f32(set);
    const auto once = set.at("x").values();
    snap_to_f32(set);
    CHECK(set.at("x").values() == once);
}

TEST_CASE("missing checkpoint file raises a checkpoint error") {
    CHECK_THROWS_AS(load_checkpoint(temp_stem("nonexistent_stem")), CheckpointError);
}
