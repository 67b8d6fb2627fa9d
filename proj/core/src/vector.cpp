#include "densekit/vector.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "densekit/error.hpp"

namespace densekit {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::dimension_mismatch: return "dimension-mismatch";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::empty_index: return "empty-index";
        case ErrorCode::corrupt_index: return "corrupt-index";
        case ErrorCode::parse: return "parse";
        case ErrorCode::io: return "io";
        case ErrorCode::network: return "network";
        case ErrorCode::frozen: return "frozen";
    }
    return "unknown";
}

float dot_unchecked(const float* a, const float* b, std::size_t n) noexcept {
    // Eight independent partial sums let the compiler vectorize without
    // -ffast-math; the summation order is fixed, so results are reproducible.
    float acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    }
    float tail = 0.0f;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) +
           tail;
}

float dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::dimension_mismatch,
                    fmt::format("dot: dimension mismatch ({} vs {})", a.size(), b.size()));
    }
    return dot_unchecked(a.data(), b.data(), a.size());
}

void require_finite(std::span<const float> values, std::string_view what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw Error(ErrorCode::invalid_argument,
                        fmt::format("{}: component {} is not finite", what, i));
        }
    }
}

namespace {

// Heap comparator: "a is better than b" puts the worst element at the root.
struct BetterFirst {
    bool operator()(const ScoredDoc& a, const ScoredDoc& b) const noexcept {
        return ranks_before(a, b);
    }
};

}  // namespace

TopK::TopK(std::size_t k) : k_(k) {
    if (k == 0) throw Error(ErrorCode::invalid_argument, "top-k: k must be at least 1");
    heap_.reserve(std::min<std::size_t>(k, 4096));
}

bool TopK::admits(float score, std::string_view doc_id) const noexcept {
    if (heap_.size() < k_) return true;
    const ScoredDoc& worst = heap_.front();
    return ranks_before(score, doc_id, worst.score, worst.doc_id);
}

void TopK::offer(float score, std::string_view doc_id) {
    if (!admits(score, doc_id)) return;
    if (heap_.size() == k_) {
        std::pop_heap(heap_.begin(), heap_.end(), BetterFirst{});
        heap_.back().doc_id.assign(doc_id);
        heap_.back().score = score;
    } else {
        heap_.push_back(ScoredDoc{std::string(doc_id), score});
    }
    std::push_heap(heap_.begin(), heap_.end(), BetterFirst{});
}

SearchResult TopK::take() && {
    std::sort_heap(heap_.begin(), heap_.end(), BetterFirst{});
    return std::move(heap_);
}

SearchResult top_k_merge(std::span<const ScoredDoc> candidates, std::size_t k) {
    TopK top(k);
    for (const auto& c : candidates) top.offer(c);
    return std::move(top).take();
}

}  // namespace densekit
