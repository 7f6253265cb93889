#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "helpers.hpp"
#include "salt/sha256.hpp"
#include "salt/weights_io.hpp"

using namespace salt;
using salt::test::random_tensor;

TEST_CASE("saltw encode/decode round trip preserves names, shapes, bits") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        NamedTensors tensors;
        const int count = 1 + static_cast<int>(rng.below(5));
        for (int i = 0; i < count; ++i) {
            Shape shape;
            const int rank = 1 + static_cast<int>(rng.below(4));
            for (int d = 0; d < rank; ++d) shape.push_back(1 + static_cast<int64_t>(rng.below(5)));
            tensors.emplace_back("t" + std::to_string(trial) + "." + std::to_string(i),
                                 random_tensor(shape, rng));
        }
        const auto bytes = encode_saltw(tensors);
        const auto back = decode_saltw(bytes);
        REQUIRE(back.size() == tensors.size());
        for (size_t i = 0; i < tensors.size(); ++i) {
            CHECK(back[i].first == tensors[i].first);
            CHECK(salt::test::bitwise_equal(back[i].second, tensors[i].second));
        }
        // byte-stable: re-encoding the decoded set gives identical bytes
        CHECK(encode_saltw(back) == bytes);
    }
}

TEST_CASE("saltw header layout") {
    NamedTensors tensors;
    tensors.emplace_back("w", Tensor::from_data({2}, {1.0f, 2.0f}));
    const auto bytes = encode_saltw(tensors);
    REQUIRE(bytes.size() >= 12);
    CHECK(bytes[0] == 'S');
    CHECK(bytes[1] == 'A');
    CHECK(bytes[2] == 'L');
    CHECK(bytes[3] == 'T');
    CHECK(bytes[4] == 'W');
    CHECK(bytes[5] == '1');
    CHECK(bytes[6] == 0);
    CHECK(bytes[7] == 0);
    CHECK(bytes[8] == 1); // u32 LE tensor count
    // u16 LE name length, name, u8 rank, u32 LE dim
    CHECK(bytes[12] == 1);
    CHECK(bytes[13] == 0);
    CHECK(bytes[14] == 'w');
    CHECK(bytes[15] == 1);
    CHECK(bytes[16] == 2);
}

TEST_CASE("saltw rejects corruption") {
    NamedTensors tensors;
    tensors.emplace_back("w", Tensor::from_data({3}, {1, 2, 3}));
    auto bytes = encode_saltw(tensors);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 5);
    CHECK_THROWS_AS(decode_saltw(truncated), IoError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_saltw(bad_magic), IoError);
}

TEST_CASE("saltw file round trip") {
    Rng rng(12);
    NamedTensors tensors;
    tensors.emplace_back("layer.weight", random_tensor({4, 3, 3, 3}, rng));
    tensors.emplace_back("layer.bias", random_tensor({4}, rng));
    const std::string path = "/tmp/salt_test_weights.saltw";
    save_saltw(path, tensors);
    const auto back = load_saltw(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].first == "layer.weight");
    CHECK(salt::test::bitwise_equal(back[0].second, tensors[0].second));
    CHECK(salt::test::bitwise_equal(back[1].second, tensors[1].second));
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_saltw(path), IoError);
}

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    const std::string abc = "abc";
    std::vector<uint8_t> v(abc.begin(), abc.end());
    CHECK(sha256_hex(v) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    // two-block message (56 bytes forces padding into a second block)
    const std::string s56(56, 'a');
    std::vector<uint8_t> v56(s56.begin(), s56.end());
    CHECK(sha256_hex(v56) == "b35439a4ac6f0948b6d6f9e3c6af0f5f590ce20f1bde7090ef7970686ec6738a");
}
