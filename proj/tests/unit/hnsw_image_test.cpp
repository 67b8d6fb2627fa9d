#include <gtest/gtest.h>

#include <sstream>

#include "densekit/error.hpp"
#include "densekit/hnsw_index.hpp"
#include "support.hpp"

using namespace densekit;

namespace {

HnswIndex build(std::size_t n, std::size_t dim, std::uint64_t seed, HnswParams params) {
    HnswIndex index(dim, params);
    for (const auto& e : testsupport::random_embeddings(n, dim, seed)) index.insert(e);
    index.freeze();
    return index;
}

std::string image_of(const HnswIndex& index) {
    std::ostringstream out;
    index.save(out);
    return out.str();
}

HnswIndex load_bytes(const std::string& bytes) {
    std::istringstream in(bytes);
    return HnswIndex::load(in);
}

}  // namespace

TEST(HnswImage, RoundTripSmall) {
    const auto index = build(100, 8, 1, HnswParams::for_m(4, 16, 2));
    const std::string bytes = image_of(index);
    const auto loaded = load_bytes(bytes);
    EXPECT_TRUE(loaded.frozen());
    EXPECT_EQ(loaded.size(), index.size());
    EXPECT_EQ(loaded.params(), index.params());
    EXPECT_EQ(image_of(loaded), bytes);
    std::mt19937_64 rng(3);
    for (int q = 0; q < 20; ++q) {
        const auto query = testsupport::random_unit_vector(rng, 8);
        EXPECT_EQ(loaded.search(query, {50, 10}), index.search(query, {50, 10}));
    }
}

TEST(HnswImage, RoundTrip10k) {
    const auto index = build(10'000, 32, 4, HnswParams::for_m(16, 100, 5));
    testsupport::TempDir dir;
    const std::string path = dir.file("index.dkh");
    index.save_file(path);
    const auto loaded = HnswIndex::load_file(path);
    std::mt19937_64 rng(6);
    for (int q = 0; q < 50; ++q) {
        const auto query = testsupport::random_unit_vector(rng, 32);
        ASSERT_EQ(loaded.search(query, {1000, 100}), index.search(query, {1000, 100}));
    }
}

TEST(HnswImage, SaveRequiresFrozenIndex) {
    HnswIndex index(2, HnswParams::for_m(4, 8));
    index.insert("a", std::vector<float>{1, 0});
    std::ostringstream out;
    try {
        index.save(out);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::frozen);
    }
}

TEST(HnswImage, EveryTruncationIsCorrupt) {
    const auto index = build(40, 4, 7, HnswParams::for_m(4, 8, 8));
    const std::string bytes = image_of(index);
    for (std::size_t len = 0; len < bytes.size(); ++len) {
        try {
            load_bytes(bytes.substr(0, len));
            FAIL() << "prefix of " << len << " bytes loaded";
        } catch (const Error& e) {
            ASSERT_EQ(e.code(), ErrorCode::corrupt_index) << "prefix " << len << ": " << e.what();
        }
    }
}

TEST(HnswImage, OneByteTruncationNamesSection) {
    const auto index = build(200, 8, 9, HnswParams::for_m(4, 16, 1));
    std::string bytes = image_of(index);
    bytes.pop_back();
    try {
        load_bytes(bytes);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::corrupt_index);
        EXPECT_NE(std::string(e.what()).find("corrupt index image"), std::string::npos) << e.what();
    }
}

TEST(HnswImage, TrailingBytesRejected) {
    const auto index = build(20, 4, 2, HnswParams::for_m(4, 8));
    try {
        load_bytes(image_of(index) + "x");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::corrupt_index);
    }
}

TEST(HnswImage, WrongMagicRejected) {
    const auto index = build(20, 4, 2, HnswParams::for_m(4, 8));
    std::string bytes = image_of(index);
    bytes[0] = 'X';
    EXPECT_THROW(load_bytes(bytes), Error);
}

TEST(HnswImage, BitFlipsNeverCrash) {
    const auto index = build(30, 4, 3, HnswParams::for_m(4, 8, 3));
    const std::string bytes = image_of(index);
    std::mt19937_64 rng(12);
    std::size_t rejected = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        std::string mutated = bytes;
        const std::size_t pos = rng() % mutated.size();
        mutated[pos] = static_cast<char>(mutated[pos] ^ (1u << (rng() % 8)));
        try {
            const auto loaded = load_bytes(mutated);
            // Flips inside vector payloads load fine; the graph must still be usable.
            loaded.search(std::vector<float>(4, 0.5f), {10, 5});
        } catch (const Error& e) {
            ASSERT_EQ(e.code(), ErrorCode::corrupt_index) << e.what();
            ++rejected;
        }
    }
    EXPECT_GT(rejected, 0u);
}

TEST(HnswImage, MissingFileIsIoError) {
    try {
        HnswIndex::load_file("/nonexistent/densekit/index.dkh");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::io);
    }
}
