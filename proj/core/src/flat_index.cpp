#include "densekit/flat_index.hpp"

#include <algorithm>
#include <thread>

#include <fmt/format.h>

#include "densekit/error.hpp"

namespace densekit {

FlatIndex::FlatIndex(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw Error(ErrorCode::invalid_argument, "flat index: dimension must be positive");
}

void FlatIndex::add(std::string id, std::span<const float> values) {
    if (frozen_) throw Error(ErrorCode::frozen, "flat index: add after freeze");
    if (values.size() != dimension_) {
        throw Error(ErrorCode::dimension_mismatch,
                    fmt::format("flat index: vector '{}' has dimension {}, index has {}", id,
                                values.size(), dimension_));
    }
    if (positions_.contains(id)) {
        throw Error(ErrorCode::conflict, fmt::format("flat index: duplicate id '{}'", id));
    }
    require_finite(values, "flat index vector");
    positions_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    data_.insert(data_.end(), values.begin(), values.end());
}

bool FlatIndex::contains(std::string_view id) const {
    return positions_.contains(std::string(id));
}

SearchResult FlatIndex::scan(const float* query, std::size_t begin, std::size_t end,
                             std::size_t k) const {
    TopK top(k);
    for (std::size_t i = begin; i < end; ++i) {
        const float score = dot_unchecked(query, data_.data() + i * dimension_, dimension_);
        top.offer(score, ids_[i]);
    }
    return std::move(top).take();
}

SearchResult FlatIndex::search(std::span<const float> query, std::size_t k,
                               std::size_t threads) const {
    if (k == 0) throw Error(ErrorCode::invalid_argument, "flat search: k must be at least 1");
    if (empty()) throw Error(ErrorCode::empty_index, "flat search: index is empty");
    if (query.size() != dimension_) {
        throw Error(ErrorCode::dimension_mismatch,
                    fmt::format("flat search: query dimension {} does not match index dimension {}",
                                query.size(), dimension_));
    }
    const std::size_t n = size();
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n / 1024));
    if (threads == 1) return scan(query.data(), 0, n, k);

    std::vector<SearchResult> partials(threads);
    {
        std::vector<std::jthread> workers;
        workers.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            workers.emplace_back([&, t] {
                const std::size_t begin = n * t / threads;
                const std::size_t end = n * (t + 1) / threads;
                partials[t] = scan(query.data(), begin, end, k);
            });
        }
    }
    std::vector<ScoredDoc> all;
    for (auto& p : partials) all.insert(all.end(), p.begin(), p.end());
    return top_k_merge(all, k);
}

}  // namespace densekit
