#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "densekit/vector.hpp"

namespace densekit {

struct HnswParams {
    std::size_t m = 16;                 // max links per node above layer 0
    std::size_t m0 = 32;                // max links per node on layer 0
    std::size_t ef_construction = 100;  // candidate pool while inserting
    double level_scale = 0.36067376022224085;  // 1 / ln(16)
    std::uint64_t seed = 0;             // level-sampling stream

    /// Defaults derived from m: m0 = 2m, level_scale = 1/ln(m).
    static HnswParams for_m(std::size_t m, std::size_t ef_construction = 100,
                            std::uint64_t seed = 0);

    /// Throws Error{invalid_argument} unless m >= 2, m0 >= m, ef_construction >= m
    /// and level_scale is positive and finite.
    void validate() const;

    friend bool operator==(const HnswParams&, const HnswParams&) = default;
};

struct SearchParams {
    std::size_t ef_search = 1000;
    std::size_t k = 1000;

    /// Pool size actually used: ef_search raised to k when smaller.
    std::size_t effective_ef() const noexcept { return ef_search < k ? k : ef_search; }
    bool clamps() const noexcept { return ef_search < k; }
};

/// Hierarchical navigable small-world graph over dot-product similarity.
///
/// Lifecycle is build-then-freeze. While building, insert() is
/// single-threaded and fully deterministic for a given seed and insertion
/// order; insert_batch() links nodes from several workers with per-node
/// locking and gives up that determinism (levels are still drawn in input
/// order). After freeze() the graph is immutable and search() may be called
/// concurrently from any number of threads.
///
/// Inside the graph "distance" is the negated dot product, so the closest
/// node is the one with the largest inner product.
class HnswIndex {
public:
    using NodeId = std::uint32_t;

    HnswIndex(std::size_t dimension, HnswParams params);
    ~HnswIndex();
    HnswIndex(HnswIndex&&) noexcept;
    HnswIndex& operator=(HnswIndex&&) noexcept;

    std::size_t dimension() const noexcept { return dimension_; }
    const HnswParams& params() const noexcept { return params_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    bool frozen() const noexcept { return frozen_; }
    int max_level() const noexcept { return max_level_; }
    std::optional<NodeId> entry_point() const noexcept;

    void insert(std::string id, std::span<const float> values);
    void insert(const Embedding& e) { insert(e.id, e.values); }

    /// Inserts every embedding, linking with up to `threads` workers.
    /// threads <= 1 is equivalent to calling insert() in order.
    void insert_batch(std::span<const Embedding> batch, std::size_t threads);

    void freeze() noexcept { frozen_ = true; }

    SearchResult search(std::span<const float> query, const SearchParams& sp) const;

    /// Writes the binary image; requires a frozen index. Returns bytes written.
    std::uint64_t save(std::ostream& out) const;
    void save_file(const std::string& path) const;

    /// Reads an image produced by save(). The result is frozen. Malformed
    /// input raises Error{corrupt_index} naming the section that failed.
    static HnswIndex load(std::istream& in);
    static HnswIndex load_file(const std::string& path);

    // Graph introspection.
    std::string_view id_at(NodeId node) const { return ids_[node]; }
    std::span<const float> vector_at(NodeId node) const {
        return {vectors_.data() + std::size_t{node} * dimension_, dimension_};
    }
    int level_of(NodeId node) const { return levels_[node]; }
    std::span<const NodeId> neighbors(NodeId node, int layer) const;
    std::optional<NodeId> find(std::string_view id) const;

private:
    struct Candidate {
        float distance;
        NodeId node;
        friend bool operator<(const Candidate& a, const Candidate& b) noexcept {
            return a.distance < b.distance || (a.distance == b.distance && a.node < b.node);
        }
        friend bool operator>(const Candidate& a, const Candidate& b) noexcept { return b < a; }
    };
    class VisitedList;
    class VisitedPool;

    int sample_level();
    NodeId append_node(std::string id, std::span<const float> values, int level);
    void link(NodeId node, VisitedList& visited);

    bool settled(NodeId node) const noexcept;
    void mark_settled(NodeId node) noexcept;
    float distance(const float* query, NodeId node) const noexcept;
    float distance(NodeId a, NodeId b) const noexcept;
    std::size_t capacity(int layer) const noexcept { return layer == 0 ? params_.m0 : params_.m; }

    NodeId* link_block(NodeId node, int layer) noexcept;
    const NodeId* link_block(NodeId node, int layer) const noexcept;
    void copy_links(NodeId node, int layer, std::vector<NodeId>& out) const;

    NodeId greedy_closest(const float* query, NodeId start, int from_layer, int to_layer) const;
    std::vector<Candidate> search_layer(const float* query, NodeId start, std::size_t ef,
                                        int layer, VisitedList& visited) const;
    std::vector<Candidate> select_diverse(std::vector<Candidate> sorted, std::size_t limit) const;
    void connect(NodeId node, std::vector<Candidate> pool, int layer);

    void check_insertable(const std::string& id, std::span<const float> values) const;

    std::size_t dimension_;
    HnswParams params_;
    bool frozen_ = false;

    std::vector<float> vectors_;
    std::vector<std::string> ids_;
    std::vector<int> levels_;
    // Layer 0 links, one block of (1 + m0) per node: [count, ids...].
    std::vector<NodeId> layer0_;
    // Layers 1..level, blocks of (1 + m) per layer, per node.
    std::vector<std::vector<NodeId>> upper_;
    std::unordered_map<std::string, NodeId> positions_;

    int max_level_ = -1;
    NodeId entry_ = 0;

    std::mt19937_64 level_rng_;

    // Build-phase synchronization; untouched once frozen.
    struct BuildLocks;
    std::unique_ptr<BuildLocks> locks_;
    bool concurrent_build_ = false;

    std::unique_ptr<VisitedPool> visited_pool_;
};

}  // namespace densekit
