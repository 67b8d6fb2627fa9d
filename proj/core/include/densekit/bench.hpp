#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "densekit/vector.hpp"

namespace densekit {

using SearchFn = std::function<SearchResult(std::span<const float>)>;

/// Runs `search` over every query with up to `threads` workers. Results are
/// returned in query order whatever the thread count.
std::vector<SearchResult> run_queries(std::span<const Embedding> queries, const SearchFn& search,
                                      std::size_t threads);

struct BenchReport {
    double queries_per_second = 0.0;  // mean of per-trial QPS
    std::size_t trials = 0;
    std::size_t warmup_runs = 0;
    std::size_t passes_executed = 0;  // warmup + timed
    std::size_t threads = 0;
    std::size_t query_count = 0;
    std::size_t k = 0;
    std::size_t ef_search = 0;
    std::vector<double> trial_seconds;
};

/// Executes `warmup` untimed passes, then `trials` timed passes over all
/// queries. k and ef_search are echoed into the report only.
BenchReport run_bench(std::span<const Embedding> queries, const SearchFn& search, std::size_t threads,
                      std::size_t trials, std::size_t warmup, std::size_t k, std::size_t ef_search);

}  // namespace densekit
