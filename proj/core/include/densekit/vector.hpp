#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace densekit {

/// A document or query vector. The dimension is fixed by the collection the
/// embedding belongs to, not by the embedding itself.
struct Embedding {
    std::string id;
    std::vector<float> values;

    std::size_t dimension() const noexcept { return values.size(); }
    friend bool operator==(const Embedding&, const Embedding&) = default;
};

struct ScoredDoc {
    std::string doc_id;
    float score = 0.0f;

    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Hits for one query, best first.
using SearchResult = std::vector<ScoredDoc>;

/// Canonical hit ordering: score descending, then doc id ascending.
inline bool ranks_before(float score_a, std::string_view id_a, float score_b,
                         std::string_view id_b) noexcept {
    if (score_a != score_b) return score_a > score_b;
    return id_a < id_b;
}

inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) noexcept {
    return ranks_before(a.score, a.doc_id, b.score, b.doc_id);
}

/// Inner product with no length check. Every score the library reports goes
/// through this function so values are reproducible across index types.
float dot_unchecked(const float* a, const float* b, std::size_t n) noexcept;

/// Inner product; throws Error{dimension_mismatch} when lengths differ.
float dot(std::span<const float> a, std::span<const float> b);

inline float dot(const Embedding& a, const Embedding& b) { return dot(a.values, b.values); }

/// Throws Error{invalid_argument} naming `what` if any component is NaN or infinite.
void require_finite(std::span<const float> values, std::string_view what);

/// Bounded best-k collector under the canonical ordering. Offers that cannot
/// make the cut are rejected without copying the id.
class TopK {
public:
    explicit TopK(std::size_t k);

    std::size_t capacity() const noexcept { return k_; }
    std::size_t size() const noexcept { return heap_.size(); }

    /// True when an entry with this score and id would be retained.
    bool admits(float score, std::string_view doc_id) const noexcept;

    void offer(float score, std::string_view doc_id);
    void offer(const ScoredDoc& doc) { offer(doc.score, doc.doc_id); }

    /// Drains the collector into a canonically sorted result.
    SearchResult take() &&;

private:
    std::size_t k_;
    // Max-heap on "worse than": the root is the weakest retained entry.
    std::vector<ScoredDoc> heap_;
};

/// Keeps the k best of `candidates` in canonical order. Doc ids in the input
/// are expected to be distinct.
SearchResult top_k_merge(std::span<const ScoredDoc> candidates, std::size_t k);

}  // namespace densekit
