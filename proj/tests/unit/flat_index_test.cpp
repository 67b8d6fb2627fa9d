#include <gtest/gtest.h>

#include <functional>
#include <limits>
#include <set>

#include "densekit/error.hpp"
#include "densekit/flat_index.hpp"
#include "support.hpp"

using namespace densekit;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::io;
}

FlatIndex build(const std::vector<Embedding>& corpus, std::size_t dim) {
    FlatIndex index(dim);
    for (const auto& e : corpus) index.add(e);
    index.freeze();
    return index;
}

}  // namespace

TEST(FlatIndex, AddToEmpty) {
    FlatIndex index(2);
    EXPECT_TRUE(index.empty());
    index.add("d1", std::vector<float>{1, 0});
    EXPECT_EQ(index.size(), 1u);
    EXPECT_TRUE(index.contains("d1"));
}

TEST(FlatIndex, DuplicateIdConflicts) {
    FlatIndex index(2);
    index.add("d1", std::vector<float>{1, 0});
    EXPECT_EQ(code_of([&] { index.add("d1", std::vector<float>{0, 1}); }), ErrorCode::conflict);
    EXPECT_EQ(index.size(), 1u);
}

TEST(FlatIndex, ThousandDistinctIdsRetrievable) {
    const auto corpus = testsupport::random_embeddings(1000, 8, 1);
    const auto index = build(corpus, 8);
    ASSERT_EQ(index.size(), 1000u);
    for (const auto& e : corpus) {
        ASSERT_TRUE(index.contains(e.id));
        const auto hit = index.search(e.values, 1);
        ASSERT_EQ(hit.size(), 1u);
        EXPECT_EQ(hit[0].doc_id, e.id);
    }
}

TEST(FlatIndex, RejectsBadInput) {
    FlatIndex index(2);
    EXPECT_EQ(code_of([&] { index.add("a", std::vector<float>{1, 2, 3}); }), ErrorCode::dimension_mismatch);
    EXPECT_EQ(code_of([&] { index.add("a", std::vector<float>{1, std::numeric_limits<float>::quiet_NaN()}); }),
              ErrorCode::invalid_argument);
    EXPECT_EQ(code_of([&] { index.search(std::vector<float>{1, 0}, 1); }), ErrorCode::empty_index);
    index.add("a", std::vector<float>{1, 0});
    EXPECT_EQ(code_of([&] { index.search(std::vector<float>{1, 0, 0}, 1); }), ErrorCode::dimension_mismatch);
    EXPECT_EQ(code_of([&] { index.search(std::vector<float>{1, 0}, 0); }), ErrorCode::invalid_argument);
    index.freeze();
    EXPECT_EQ(code_of([&] { index.add("b", std::vector<float>{0, 1}); }), ErrorCode::frozen);
}

TEST(FlatIndex, AlignedVectorWins) {
    FlatIndex index(2);
    index.add("d1", std::vector<float>{1, 0});
    index.add("d2", std::vector<float>{0, 1});
    const auto hits = index.search(std::vector<float>{1, 0}, 1);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0], (ScoredDoc{"d1", 1.0f}));
}

TEST(FlatIndex, KLargerThanSizeReturnsEverything) {
    const auto corpus = testsupport::random_embeddings(7, 4, 2);
    const auto index = build(corpus, 4);
    const auto hits = index.search(corpus[0].values, 100);
    EXPECT_EQ(hits.size(), 7u);
    std::set<std::string> ids;
    for (const auto& h : hits) ids.insert(h.doc_id);
    EXPECT_EQ(ids.size(), 7u);
}

TEST(FlatIndex, MatchesBruteForceOracle) {
    const auto corpus = testsupport::random_embeddings(5000, 16, 3, false);
    const auto index = build(corpus, 16);
    std::mt19937_64 rng(4);
    for (int q = 0; q < 50; ++q) {
        const auto query = testsupport::random_vector(rng, 16);
        const auto expected = testsupport::brute_force_top_k(corpus, query, 10);
        const auto got = index.search(query, 10);
        ASSERT_EQ(got.size(), expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].doc_id, expected[i].id) << "query " << q << " rank " << i;
            EXPECT_TRUE(testsupport::close_rel(got[i].score, expected[i].score, 1e-5));
        }
    }
}

TEST(FlatIndex, ScoresAreExactDotsAndNonIncreasing) {
    const auto corpus = testsupport::random_embeddings(2000, 24, 5, false);
    const auto index = build(corpus, 24);
    std::mt19937_64 rng(6);
    const auto query = testsupport::random_vector(rng, 24);
    const auto hits = index.search(query, index.size());
    ASSERT_EQ(hits.size(), corpus.size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (i > 0) {
            EXPECT_TRUE(ranks_before(hits[i - 1], hits[i]));
        }
        EXPECT_TRUE(seen.insert(hits[i].doc_id).second);
        const auto pos = std::stoul(hits[i].doc_id.substr(3));
        EXPECT_EQ(hits[i].score, dot(query, corpus[pos].values));
    }
}

TEST(FlatIndex, ThreadCountDoesNotChangeResults) {
    const auto corpus = testsupport::random_embeddings(20'000, 16, 7);
    const auto index = build(corpus, 16);
    std::mt19937_64 rng(8);
    for (int q = 0; q < 10; ++q) {
        const auto query = testsupport::random_unit_vector(rng, 16);
        const auto one = index.search(query, 50, 1);
        for (std::size_t threads : {2u, 3u, 8u}) EXPECT_EQ(index.search(query, 50, threads), one);
    }
}

TEST(FlatIndex, TiesOrderedById) {
    FlatIndex index(2);
    index.add("c", std::vector<float>{1, 0});
    index.add("a", std::vector<float>{1, 0});
    index.add("b", std::vector<float>{1, 0});
    const auto hits = index.search(std::vector<float>{1, 0}, 3);
    EXPECT_EQ(testsupport::ids_of(hits), (std::vector<std::string>{"a", "b", "c"}));
}
