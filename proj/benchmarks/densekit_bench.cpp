#include <benchmark/benchmark.h>

#include <cmath>
#include <map>
#include <random>

#include "densekit/flat_index.hpp"
#include "densekit/hnsw_index.hpp"
#include "densekit/vector.hpp"

using namespace densekit;

namespace {

std::vector<Embedding> unit_vectors(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal;
    std::vector<Embedding> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].id = "d" + std::to_string(i);
        out[i].values.resize(dim);
        double norm = 0.0;
        for (auto& v : out[i].values) {
            v = normal(rng);
            norm += double(v) * v;
        }
        for (auto& v : out[i].values) v = float(v / std::sqrt(norm));
    }
    return out;
}

const HnswIndex& shared_hnsw(std::size_t n, std::size_t dim) {
    static std::map<std::pair<std::size_t, std::size_t>, HnswIndex> cache;
    auto it = cache.find({n, dim});
    if (it == cache.end()) {
        HnswIndex index(dim, HnswParams::for_m(16, 100, 1));
        for (const auto& e : unit_vectors(n, dim, 1)) index.insert(e);
        index.freeze();
        it = cache.emplace(std::pair{n, dim}, std::move(index)).first;
    }
    return it->second;
}

void BM_Dot(benchmark::State& state) {
    const auto dim = std::size_t(state.range(0));
    const auto v = unit_vectors(2, dim, 3);
    for (auto _ : state) benchmark::DoNotOptimize(dot(v[0].values, v[1].values));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Dot)->Arg(64)->Arg(768)->Arg(1536);

void BM_FlatSearch(benchmark::State& state) {
    const auto n = std::size_t(state.range(0));
    FlatIndex index(64);
    for (const auto& e : unit_vectors(n, 64, 1)) index.add(e);
    index.freeze();
    const auto queries = unit_vectors(64, 64, 2);
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(index.search(queries[i++ % queries.size()].values, 10));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FlatSearch)->Arg(10'000)->Arg(50'000);

void BM_HnswSearch(benchmark::State& state) {
    const auto& index = shared_hnsw(50'000, 64);
    const auto queries = unit_vectors(64, 64, 2);
    const SearchParams sp{std::size_t(state.range(0)), 10};
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(index.search(queries[i++ % queries.size()].values, sp));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_HnswSearch)->Arg(10)->Arg(100)->Arg(1000);

void BM_HnswBuild(benchmark::State& state) {
    const auto corpus = unit_vectors(std::size_t(state.range(0)), 64, 4);
    for (auto _ : state) {
        HnswIndex index(64, HnswParams::for_m(16, 100, 1));
        for (const auto& e : corpus) index.insert(e);
        benchmark::DoNotOptimize(index.max_level());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HnswBuild)->Arg(5'000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
