#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "densekit/vector.hpp"

namespace densekit {

/// Exhaustive dot-product search over every stored vector. Serves as the
/// exact reference that approximate results are measured against.
///
/// Append-only until freeze(); searching is const and safe from any number
/// of threads once no more vectors are being added.
class FlatIndex {
public:
    explicit FlatIndex(std::size_t dimension);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    bool frozen() const noexcept { return frozen_; }

    void add(std::string id, std::span<const float> values);
    void add(const Embedding& e) { add(e.id, e.values); }
    void freeze() noexcept { frozen_ = true; }

    bool contains(std::string_view id) const;
    std::string_view id_at(std::size_t i) const { return ids_[i]; }
    std::span<const float> vector_at(std::size_t i) const {
        return {data_.data() + i * dimension_, dimension_};
    }

    /// Exact top-k. The scan is split across `threads` workers and merged in
    /// canonical order, so the result does not depend on the thread count.
    SearchResult search(std::span<const float> query, std::size_t k,
                        std::size_t threads = 1) const;

private:
    SearchResult scan(const float* query, std::size_t begin, std::size_t end,
                      std::size_t k) const;

    std::size_t dimension_;
    bool frozen_ = false;
    std::vector<float> data_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> positions_;
};

}  // namespace densekit
