#include "densekit/bench.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include "densekit/error.hpp"

namespace densekit {

std::vector<SearchResult> run_queries(std::span<const Embedding> queries, const SearchFn& search,
                                      std::size_t threads) {
    std::vector<SearchResult> results(queries.size());
    threads = std::max<std::size_t>(1, std::min(threads, queries.size()));
    if (threads == 1) {
        for (std::size_t i = 0; i < queries.size(); ++i) results[i] = search(queries[i].values);
        return results;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    {
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < threads; ++t) {
            workers.emplace_back([&] {
                try {
                    for (std::size_t i = next++; i < queries.size(); i = next++) {
                        results[i] = search(queries[i].values);
                    }
                } catch (...) {
                    std::lock_guard guard(failure_lock);
                    if (!failure) failure = std::current_exception();
                    next = queries.size();
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

BenchReport run_bench(std::span<const Embedding> queries, const SearchFn& search, std::size_t threads,
                      std::size_t trials, std::size_t warmup, std::size_t k, std::size_t ef_search) {
    if (queries.empty()) throw Error(ErrorCode::invalid_argument, "bench: no queries");
    if (trials == 0) throw Error(ErrorCode::invalid_argument, "bench: trials must be at least 1");
    if (threads == 0) throw Error(ErrorCode::invalid_argument, "bench: threads must be at least 1");

    BenchReport report;
    report.trials = trials;
    report.warmup_runs = warmup;
    report.threads = threads;
    report.query_count = queries.size();
    report.k = k;
    report.ef_search = ef_search;

    for (std::size_t i = 0; i < warmup; ++i) {
        run_queries(queries, search, threads);
        ++report.passes_executed;
    }
    double qps_sum = 0.0;
    for (std::size_t i = 0; i < trials; ++i) {
        const auto start = std::chrono::steady_clock::now();
        run_queries(queries, search, threads);
        const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
        ++report.passes_executed;
        // Guard against a zero reading from a coarse clock.
        const double seconds = std::max(took.count(), 1e-9);
        report.trial_seconds.push_back(seconds);
        qps_sum += static_cast<double>(queries.size()) / seconds;
    }
    report.queries_per_second = qps_sum / static_cast<double>(trials);
    return report;
}

}  // namespace densekit
