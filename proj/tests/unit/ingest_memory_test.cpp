#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "alloc_tracker.hpp"
#include "densekit/ingest.hpp"
#include "support.hpp"

using namespace densekit;

namespace {

constexpr std::size_t kRecords = 100'000;
constexpr std::size_t kDim = 64;
constexpr std::size_t kBudget = 2 * 1024 * 1024;

CorpusRecord make_record(std::mt19937_64& rng, std::size_t i) {
    return {"p" + std::to_string(i), testsupport::random_unit_vector(rng, kDim), std::nullopt};
}

// Streams kRecords records to disk and reports the peak heap growth.
std::size_t write_streaming(const std::string& path, bool gz) {
    std::mt19937_64 rng(17);
    CorpusRecord first = make_record(rng, 0);
    alloc_tracker::reset_peak();
    const std::size_t base = alloc_tracker::live_bytes();
    {
        CorpusWriter writer(path, gz);
        writer.write(first);
        for (std::size_t i = 1; i < kRecords; ++i) {
            CorpusRecord r = make_record(rng, i);
            writer.write(r);
        }
        writer.finish();
    }
    return alloc_tracker::peak_bytes() - base;
}

std::size_t read_streaming(const std::string& path, std::size_t& count, std::size_t& checked) {
    std::mt19937_64 rng(17);
    alloc_tracker::reset_peak();
    const std::size_t base = alloc_tracker::live_bytes();
    CorpusReader reader(path);
    CorpusRecord r;
    while (reader.next(r)) {
        const CorpusRecord expected = make_record(rng, count);
        checked += r == expected;
        ++count;
    }
    return alloc_tracker::peak_bytes() - base;
}

}  // namespace

TEST(IngestMemory, TrackerSeesLargeAllocations) {
    alloc_tracker::reset_peak();
    const std::size_t base = alloc_tracker::live_bytes();
    { std::vector<char> big(8 * kBudget); }
    EXPECT_GE(alloc_tracker::peak_bytes() - base, 8 * kBudget);
}

TEST(IngestMemory, StreamingStaysWithinBudget) {
    testsupport::TempDir dir;
    for (bool gz : {false, true}) {
        const std::string path = dir.file(gz ? "big.jsonl.gz" : "big.jsonl");
        const std::size_t write_peak = write_streaming(path, gz);
        const auto file_size = std::filesystem::file_size(path);
        ASSERT_GT(file_size, 4 * kBudget) << "file must dwarf the budget for the test to mean anything";

        std::size_t count = 0, checked = 0;
        const std::size_t read_peak = read_streaming(path, count, checked);
        EXPECT_EQ(count, kRecords);
        EXPECT_EQ(checked, kRecords);
        EXPECT_LE(write_peak, kBudget) << "gz=" << gz;
        EXPECT_LE(read_peak, kBudget) << "gz=" << gz;
    }
}
