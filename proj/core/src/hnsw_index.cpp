#include "densekit/hnsw_index.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <mutex>
#include <queue>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>

#include "densekit/error.hpp"

namespace densekit {

HnswParams HnswParams::for_m(std::size_t m, std::size_t ef_construction, std::uint64_t seed) {
    HnswParams p;
    p.m = m;
    p.m0 = 2 * m;
    p.ef_construction = ef_construction;
    p.level_scale = m > 1 ? 1.0 / std::log(static_cast<double>(m)) : 0.0;
    p.seed = seed;
    return p;
}

void HnswParams::validate() const {
    if (m < 2) throw Error(ErrorCode::invalid_argument, fmt::format("hnsw: m must be >= 2 (got {})", m));
    if (m0 < m) {
        throw Error(ErrorCode::invalid_argument, fmt::format("hnsw: m0 ({}) must be >= m ({})", m0, m));
    }
    if (ef_construction < m) {
        throw Error(ErrorCode::invalid_argument,
                    fmt::format("hnsw: ef_construction ({}) must be >= m ({})", ef_construction, m));
    }
    if (!(level_scale > 0.0) || !std::isfinite(level_scale)) {
        throw Error(ErrorCode::invalid_argument, "hnsw: level_scale must be positive and finite");
    }
    // Link blocks store counts and ids as 32-bit values.
    if (m0 > (1u << 16)) throw Error(ErrorCode::invalid_argument, "hnsw: m0 is unreasonably large");
}

struct HnswIndex::BuildLocks {
    std::deque<std::mutex> nodes;
    std::mutex entry;
    // Set once a node has written its links on every layer. Until then its
    // lower layers may still be empty, so searches must not descend through it.
    std::deque<std::atomic<bool>> settled;
};

// Epoch-stamped visited marks; reset() is O(1) except on epoch wrap-around.
class HnswIndex::VisitedList {
public:
    explicit VisitedList(std::size_t n) : marks_(n, 0) {}

    void reset(std::size_t n) {
        if (marks_.size() < n) marks_.resize(n, 0);
        if (++epoch_ == 0) {
            std::fill(marks_.begin(), marks_.end(), 0);
            epoch_ = 1;
        }
    }

    // Returns true if `node` was already visited in the current epoch.
    bool test_and_set(NodeId node) noexcept {
        if (marks_[node] == epoch_) return true;
        marks_[node] = epoch_;
        return false;
    }

private:
    std::uint32_t epoch_ = 0;
    std::vector<std::uint32_t> marks_;
};

class HnswIndex::VisitedPool {
public:
    std::unique_ptr<VisitedList> acquire(std::size_t n) {
        std::unique_ptr<VisitedList> list;
        {
            std::lock_guard guard(mutex_);
            if (!free_.empty()) {
                list = std::move(free_.back());
                free_.pop_back();
            }
        }
        if (!list) list = std::make_unique<VisitedList>(n);
        return list;
    }

    void release(std::unique_ptr<VisitedList> list) {
        std::lock_guard guard(mutex_);
        free_.push_back(std::move(list));
    }

private:
    std::mutex mutex_;
    std::vector<std::unique_ptr<VisitedList>> free_;
};

HnswIndex::HnswIndex(std::size_t dimension, HnswParams params)
    : dimension_(dimension),
      params_(params),
      level_rng_(params.seed),
      locks_(std::make_unique<BuildLocks>()),
      visited_pool_(std::make_unique<VisitedPool>()) {
    if (dimension == 0) throw Error(ErrorCode::invalid_argument, "hnsw: dimension must be positive");
    params_.validate();
}

HnswIndex::~HnswIndex() = default;
HnswIndex::HnswIndex(HnswIndex&&) noexcept = default;
HnswIndex& HnswIndex::operator=(HnswIndex&&) noexcept = default;

std::optional<HnswIndex::NodeId> HnswIndex::entry_point() const noexcept {
    if (max_level_ < 0) return std::nullopt;
    return entry_;
}

std::optional<HnswIndex::NodeId> HnswIndex::find(std::string_view id) const {
    auto it = positions_.find(std::string(id));
    if (it == positions_.end()) return std::nullopt;
    return it->second;
}

HnswIndex::NodeId* HnswIndex::link_block(NodeId node, int layer) noexcept {
    if (layer == 0) return layer0_.data() + std::size_t{node} * (params_.m0 + 1);
    return upper_[node].data() + std::size_t(layer - 1) * (params_.m + 1);
}

const HnswIndex::NodeId* HnswIndex::link_block(NodeId node, int layer) const noexcept {
    return const_cast<HnswIndex*>(this)->link_block(node, layer);
}

std::span<const HnswIndex::NodeId> HnswIndex::neighbors(NodeId node, int layer) const {
    if (node >= size() || layer < 0 || layer > levels_[node]) return {};
    const NodeId* block = link_block(node, layer);
    return {block + 1, block[0]};
}

void HnswIndex::copy_links(NodeId node, int layer, std::vector<NodeId>& out) const {
    std::unique_lock<std::mutex> guard;
    if (concurrent_build_) guard = std::unique_lock(locks_->nodes[node]);
    const NodeId* block = link_block(node, layer);
    out.assign(block + 1, block + 1 + block[0]);
}

bool HnswIndex::settled(NodeId node) const noexcept {
    return !concurrent_build_ || locks_->settled[node].load(std::memory_order_acquire);
}

void HnswIndex::mark_settled(NodeId node) noexcept {
    if (concurrent_build_) locks_->settled[node].store(true, std::memory_order_release);
}

float HnswIndex::distance(const float* query, NodeId node) const noexcept {
    return -dot_unchecked(query, vectors_.data() + std::size_t{node} * dimension_, dimension_);
}

float HnswIndex::distance(NodeId a, NodeId b) const noexcept {
    return distance(vectors_.data() + std::size_t{a} * dimension_, b);
}

int HnswIndex::sample_level() {
    // u is uniform on (0, 1]: 53 random bits, shifted away from zero.
    const double u = static_cast<double>((level_rng_() >> 11) + 1) * 0x1.0p-53;
    const double level = std::floor(-std::log(u) * params_.level_scale);
    return static_cast<int>(std::min(level, 255.0));
}

void HnswIndex::check_insertable(const std::string& id, std::span<const float> values) const {
    if (frozen_) throw Error(ErrorCode::frozen, "hnsw: insert into a frozen index");
    if (values.size() != dimension_) {
        throw Error(ErrorCode::dimension_mismatch,
                    fmt::format("hnsw: vector '{}' has dimension {}, index has {}", id, values.size(),
                                dimension_));
    }
    if (positions_.contains(id)) throw Error(ErrorCode::conflict, fmt::format("hnsw: duplicate id '{}'", id));
    if (size() >= std::numeric_limits<NodeId>::max()) {
        throw Error(ErrorCode::invalid_argument, "hnsw: node capacity exhausted");
    }
    require_finite(values, "hnsw vector");
}

HnswIndex::NodeId HnswIndex::append_node(std::string id, std::span<const float> values, int level) {
    const auto node = static_cast<NodeId>(ids_.size());
    positions_.emplace(id, node);
    ids_.push_back(std::move(id));
    vectors_.insert(vectors_.end(), values.begin(), values.end());
    levels_.push_back(level);
    layer0_.resize(layer0_.size() + params_.m0 + 1, 0);
    upper_.emplace_back(std::size_t(level) * (params_.m + 1), 0);
    return node;
}

void HnswIndex::insert(std::string id, std::span<const float> values) {
    check_insertable(id, values);
    const int level = sample_level();
    const NodeId node = append_node(std::move(id), values, level);
    auto visited = visited_pool_->acquire(size());
    link(node, *visited);
    visited_pool_->release(std::move(visited));
}

void HnswIndex::insert_batch(std::span<const Embedding> batch, std::size_t threads) {
    if (threads <= 1 || batch.size() < 2) {
        for (const auto& e : batch) insert(e);
        return;
    }
    std::unordered_set<std::string_view> seen;
    for (const auto& e : batch) {
        check_insertable(e.id, e.values);
        if (!seen.insert(e.id).second) {
            throw Error(ErrorCode::conflict, fmt::format("hnsw: duplicate id '{}' in batch", e.id));
        }
    }

    const NodeId first = static_cast<NodeId>(size());
    vectors_.reserve(vectors_.size() + batch.size() * dimension_);
    for (const auto& e : batch) append_node(e.id, e.values, sample_level());
    while (locks_->nodes.size() < size()) locks_->nodes.emplace_back();
    for (std::size_t i = 0; i < locks_->settled.size(); ++i) locks_->settled[i] = true;
    while (locks_->settled.size() < size()) locks_->settled.emplace_back(locks_->settled.size() < first);

    concurrent_build_ = true;
    std::atomic<std::size_t> next{first};
    std::exception_ptr failure;
    std::mutex failure_lock;
    {
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < threads; ++t) {
            workers.emplace_back([&] {
                try {
                    VisitedList visited(size());
                    for (std::size_t i = next++; i < size(); i = next++) {
                        link(static_cast<NodeId>(i), visited);
                    }
                } catch (...) {
                    std::lock_guard guard(failure_lock);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
    }
    concurrent_build_ = false;
    if (failure) std::rethrow_exception(failure);
}

HnswIndex::NodeId HnswIndex::greedy_closest(const float* query, NodeId start, int from_layer,
                                            int to_layer) const {
    NodeId current = start;
    float current_distance = distance(query, current);
    std::vector<NodeId> links;
    for (int layer = from_layer; layer >= to_layer; --layer) {
        bool moved = true;
        while (moved) {
            moved = false;
            copy_links(current, layer, links);
            for (NodeId candidate : links) {
                const float d = distance(query, candidate);
                if (d < current_distance && settled(candidate)) {
                    current_distance = d;
                    current = candidate;
                    moved = true;
                }
            }
        }
    }
    return current;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(const float* query, NodeId start,
                                                          std::size_t ef, int layer,
                                                          VisitedList& visited) const {
    visited.reset(size());
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
    std::priority_queue<Candidate> best;  // worst retained candidate on top

    const Candidate seed{distance(query, start), start};
    visited.test_and_set(start);
    frontier.push(seed);
    best.push(seed);

    std::vector<NodeId> links;
    while (!frontier.empty()) {
        const Candidate current = frontier.top();
        if (current.distance > best.top().distance && best.size() >= ef) break;
        frontier.pop();

        copy_links(current.node, layer, links);
        for (NodeId next : links) {
            if (visited.test_and_set(next)) continue;
            const float d = distance(query, next);
            if (best.size() < ef || d < best.top().distance) {
                frontier.push({d, next});
                best.push({d, next});
                if (best.size() > ef) best.pop();
            }
        }
    }

    std::vector<Candidate> out(best.size());
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
        *it = best.top();
        best.pop();
    }
    return out;
}

// Diversity heuristic: walking candidates from closest to farthest, keep one
// only if it is closer to the base than to every candidate already kept.
// Pools smaller than the limit are kept whole.
std::vector<HnswIndex::Candidate> HnswIndex::select_diverse(std::vector<Candidate> sorted,
                                                            std::size_t limit) const {
    if (sorted.size() < limit) return sorted;
    std::vector<Candidate> kept;
    kept.reserve(limit);
    for (const Candidate& c : sorted) {
        if (kept.size() >= limit) break;
        const bool diverse = std::all_of(kept.begin(), kept.end(), [&](const Candidate& k) {
            return distance(c.node, k.node) >= c.distance;
        });
        if (diverse) kept.push_back(c);
    }
    return kept;
}

void HnswIndex::connect(NodeId node, std::vector<Candidate> pool, int layer) {
    const std::vector<Candidate> selected = select_diverse(std::move(pool), params_.m);
    {
        std::unique_lock<std::mutex> guard;
        if (concurrent_build_) guard = std::unique_lock(locks_->nodes[node]);
        NodeId* block = link_block(node, layer);
        block[0] = static_cast<NodeId>(selected.size());
        for (std::size_t i = 0; i < selected.size(); ++i) block[1 + i] = selected[i].node;
    }

    const std::size_t cap = capacity(layer);
    std::vector<Candidate> overflow;
    for (const Candidate& s : selected) {
        std::unique_lock<std::mutex> guard;
        if (concurrent_build_) guard = std::unique_lock(locks_->nodes[s.node]);
        NodeId* block = link_block(s.node, layer);
        const NodeId count = block[0];
        if (std::find(block + 1, block + 1 + count, node) != block + 1 + count) continue;
        if (count < cap) {
            block[1 + count] = node;
            block[0] = count + 1;
            continue;
        }
        overflow.clear();
        overflow.push_back({s.distance, node});
        for (NodeId i = 0; i < count; ++i) {
            overflow.push_back({distance(s.node, block[1 + i]), block[1 + i]});
        }
        std::sort(overflow.begin(), overflow.end());
        const std::vector<Candidate> pruned = select_diverse(std::move(overflow), cap);
        block[0] = static_cast<NodeId>(pruned.size());
        for (std::size_t i = 0; i < pruned.size(); ++i) block[1 + i] = pruned[i].node;
    }
}

void HnswIndex::link(NodeId node, VisitedList& visited) {
    const int level = levels_[node];

    std::unique_lock<std::mutex> entry_guard;
    if (concurrent_build_) entry_guard = std::unique_lock(locks_->entry);
    const int top = max_level_;
    const NodeId entry = entry_;
    if (top < 0) {
        entry_ = node;
        max_level_ = level;
        mark_settled(node);
        return;
    }
    // Only an insert that raises the top layer keeps the entry lock.
    if (level <= top && entry_guard.owns_lock()) entry_guard.unlock();

    const float* query = vectors_.data() + std::size_t{node} * dimension_;
    NodeId current = entry;
    if (level < top) current = greedy_closest(query, current, top, level + 1);

    for (int layer = std::min(level, top); layer >= 0; --layer) {
        std::vector<Candidate> pool =
            search_layer(query, current, params_.ef_construction, layer, visited);
        std::erase_if(pool, [node](const Candidate& c) { return c.node == node; });
        if (pool.empty()) continue;
        const auto next = std::find_if(pool.begin(), pool.end(), [this](const Candidate& c) { return settled(c.node); });
        if (next != pool.end()) current = next->node;
        connect(node, std::move(pool), layer);
    }

    mark_settled(node);
    if (level > top) {
        entry_ = node;
        max_level_ = level;
    }
}

SearchResult HnswIndex::search(std::span<const float> query, const SearchParams& sp) const {
    if (sp.k == 0) throw Error(ErrorCode::invalid_argument, "hnsw search: k must be at least 1");
    if (empty()) throw Error(ErrorCode::empty_index, "hnsw search: index is empty");
    if (query.size() != dimension_) {
        throw Error(ErrorCode::dimension_mismatch,
                    fmt::format("hnsw search: query dimension {} does not match index dimension {}",
                                query.size(), dimension_));
    }

    auto visited = visited_pool_->acquire(size());
    NodeId start = entry_;
    if (max_level_ > 0) start = greedy_closest(query.data(), start, max_level_, 1);
    std::vector<Candidate> pool = search_layer(query.data(), start, sp.effective_ef(), 0, *visited);
    visited_pool_->release(std::move(visited));

    const std::size_t k = std::min(sp.k, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + k, pool.end(),
                      [this](const Candidate& a, const Candidate& b) {
                          return ranks_before(-a.distance, ids_[a.node], -b.distance, ids_[b.node]);
                      });
    SearchResult hits;
    hits.reserve(k);
    for (std::size_t i = 0; i < k; ++i) hits.push_back({ids_[pool[i].node], -pool[i].distance});
    return hits;
}

}  // namespace densekit
