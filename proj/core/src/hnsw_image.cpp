// Binary index image.
//
// All integers little-endian; floats as IEEE-754 binary32 bit patterns.
//
//   header     magic "DKHNSWIX", u32 version, u32 dimension,
//              u32 m, u32 m0, u32 ef_construction, f64 level_scale, u64 seed,
//              u64 node_count, i32 max_level, u32 entry_point
//   ids        per node: u32 byte length, bytes
//   levels     per node: u8
//   vectors    node_count * dimension f32
//   adjacency  per node, per layer 0..level: u32 count, count * u32 node ids
//   trailer    "DKHNSEND", then end of stream

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <fmt/format.h>

#include "densekit/error.hpp"
#include "densekit/hnsw_index.hpp"

namespace densekit {
namespace {

constexpr std::array<char, 8> kMagic = {'D', 'K', 'H', 'N', 'S', 'W', 'I', 'X'};
constexpr std::array<char, 8> kTrailer = {'D', 'K', 'H', 'N', 'S', 'E', 'N', 'D'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxIdBytes = 1u << 16;
constexpr std::uint32_t kMaxDimension = 1u << 20;

class ImageWriter {
public:
    explicit ImageWriter(std::ostream& out) : out_(out) { buffer_.reserve(kChunk); }

    void raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const char*>(data);
        buffer_.append(p, n);
        if (buffer_.size() >= kChunk) flush();
    }
    template <typename T>
    void le(T value) {
        static_assert(std::is_integral_v<T>);
        std::array<char, sizeof(T)> bytes{};
        auto u = static_cast<std::make_unsigned_t<T>>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
        raw(bytes.data(), bytes.size());
    }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

    void flush() {
        out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        written_ += buffer_.size();
        buffer_.clear();
        if (!out_) throw Error(ErrorCode::io, "hnsw save: write failed");
    }
    std::uint64_t written() const noexcept { return written_; }

private:
    static constexpr std::size_t kChunk = 1 << 20;
    std::ostream& out_;
    std::string buffer_;
    std::uint64_t written_ = 0;
};

class ImageReader {
public:
    explicit ImageReader(std::istream& in) : in_(in) {}

    void raw(void* data, std::size_t n, std::string_view section) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw corrupt(section, "truncated");
        }
    }
    template <typename T>
    T le(std::string_view section) {
        std::array<unsigned char, sizeof(T)> bytes{};
        raw(bytes.data(), bytes.size(), section);
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<decltype(u)>(bytes[i]) << (8 * i);
        return static_cast<T>(u);
    }
    float f32(std::string_view section) { return std::bit_cast<float>(le<std::uint32_t>(section)); }
    double f64(std::string_view section) { return std::bit_cast<double>(le<std::uint64_t>(section)); }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

    static Error corrupt(std::string_view section, std::string_view what) {
        return Error(ErrorCode::corrupt_index,
                     fmt::format("corrupt index image: {} in section '{}'", what, section));
    }

private:
    std::istream& in_;
};

}  // namespace

std::uint64_t HnswIndex::save(std::ostream& out) const {
    if (!frozen_) throw Error(ErrorCode::frozen, "hnsw save: index must be frozen first");
    ImageWriter w(out);
    w.raw(kMagic.data(), kMagic.size());
    w.le<std::uint32_t>(kVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(dimension_));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params_.m));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params_.m0));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params_.ef_construction));
    w.f64(params_.level_scale);
    w.le<std::uint64_t>(params_.seed);
    w.le<std::uint64_t>(size());
    w.le<std::int32_t>(max_level_);
    w.le<std::uint32_t>(max_level_ < 0 ? 0 : entry_);

    for (const auto& id : ids_) {
        w.le<std::uint32_t>(static_cast<std::uint32_t>(id.size()));
        w.raw(id.data(), id.size());
    }
    for (int level : levels_) w.le<std::uint8_t>(static_cast<std::uint8_t>(level));
    for (float v : vectors_) w.f32(v);
    for (NodeId node = 0; node < size(); ++node) {
        for (int layer = 0; layer <= levels_[node]; ++layer) {
            const auto links = neighbors(node, layer);
            w.le<std::uint32_t>(static_cast<std::uint32_t>(links.size()));
            for (NodeId n : links) w.le<std::uint32_t>(n);
        }
    }
    w.raw(kTrailer.data(), kTrailer.size());
    w.flush();
    return w.written();
}

void HnswIndex::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, fmt::format("cannot open '{}' for writing", path));
    save(out);
    out.close();
    if (!out) throw Error(ErrorCode::io, fmt::format("failed writing '{}'", path));
}

HnswIndex HnswIndex::load(std::istream& in) {
    ImageReader r(in);

    std::array<char, 8> magic{};
    r.raw(magic.data(), magic.size(), "header");
    if (magic != kMagic) throw ImageReader::corrupt("header", "bad magic bytes");
    const auto version = r.le<std::uint32_t>("header");
    if (version != kVersion) {
        throw ImageReader::corrupt("header", fmt::format("unsupported format version {}", version));
    }
    const auto dimension = r.le<std::uint32_t>("header");
    if (dimension == 0 || dimension > kMaxDimension) {
        throw ImageReader::corrupt("header", fmt::format("invalid dimension {}", dimension));
    }

    HnswParams params;
    params.m = r.le<std::uint32_t>("params");
    params.m0 = r.le<std::uint32_t>("params");
    params.ef_construction = r.le<std::uint32_t>("params");
    params.level_scale = r.f64("params");
    params.seed = r.le<std::uint64_t>("params");
    try {
        params.validate();
    } catch (const Error& e) {
        throw ImageReader::corrupt("params", e.what());
    }

    const auto count = r.le<std::uint64_t>("header");
    const auto max_level = r.le<std::int32_t>("header");
    const auto entry = r.le<std::uint32_t>("header");
    if (count >= std::numeric_limits<NodeId>::max()) throw ImageReader::corrupt("header", "node count too large");
    if (count == 0 ? max_level != -1 : (max_level < 0 || max_level > 255 || entry >= count)) {
        throw ImageReader::corrupt("header", "inconsistent entry point");
    }

    HnswIndex index(dimension, params);
    const auto n = static_cast<NodeId>(count);

    std::unordered_set<std::string_view> seen;
    for (NodeId node = 0; node < n; ++node) {
        const auto len = r.le<std::uint32_t>("ids");
        if (len > kMaxIdBytes) throw ImageReader::corrupt("ids", "id length out of range");
        std::string id(len, '\0');
        r.raw(id.data(), len, "ids");
        index.ids_.push_back(std::move(id));
    }
    for (const auto& id : index.ids_) {
        if (!seen.insert(id).second) throw ImageReader::corrupt("ids", fmt::format("duplicate id '{}'", id));
    }

    for (NodeId node = 0; node < n; ++node) {
        const int level = r.le<std::uint8_t>("levels");
        if (level > max_level) throw ImageReader::corrupt("levels", "node level exceeds max level");
        index.levels_.push_back(level);
    }
    if (n > 0 && index.levels_[entry] != max_level) {
        throw ImageReader::corrupt("levels", "entry point is not on the top layer");
    }

    // Read vectors in bounded chunks so a corrupt count cannot force a huge allocation.
    const std::uint64_t total = count * dimension;
    std::vector<std::uint32_t> chunk;
    for (std::uint64_t done = 0; done < total;) {
        const std::size_t take = static_cast<std::size_t>(std::min<std::uint64_t>(total - done, 1 << 16));
        chunk.resize(take);
        r.raw(chunk.data(), take * sizeof(std::uint32_t), "vectors");
        for (std::uint32_t bits : chunk) {
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            index.vectors_.push_back(std::bit_cast<float>(bits));
        }
        done += take;
    }

    index.layer0_.assign(std::size_t{n} * (params.m0 + 1), 0);
    index.upper_.resize(n);
    for (NodeId node = 0; node < n; ++node) {
        const int level = index.levels_[node];
        index.upper_[node].assign(std::size_t(level) * (params.m + 1), 0);
        for (int layer = 0; layer <= level; ++layer) {
            const auto links = r.le<std::uint32_t>("adjacency");
            if (links > index.capacity(layer)) throw ImageReader::corrupt("adjacency", "neighbor list over capacity");
            NodeId* block = index.link_block(node, layer);
            block[0] = links;
            for (std::uint32_t i = 0; i < links; ++i) {
                const auto target = r.le<std::uint32_t>("adjacency");
                if (target >= n || target == node || index.levels_[target] < layer) {
                    throw ImageReader::corrupt("adjacency", "invalid neighbor reference");
                }
                block[1 + i] = target;
            }
        }
    }

    std::array<char, 8> trailer{};
    r.raw(trailer.data(), trailer.size(), "trailer");
    if (trailer != kTrailer) throw ImageReader::corrupt("trailer", "bad trailer bytes");
    if (!r.at_end()) throw ImageReader::corrupt("trailer", "unexpected bytes after trailer");

    for (NodeId node = 0; node < n; ++node) index.positions_.emplace(index.ids_[node], node);
    index.max_level_ = max_level;
    index.entry_ = n > 0 ? entry : 0;
    index.frozen_ = true;
    return index;
}

HnswIndex HnswIndex::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open index image '{}'", path));
    return load(in);
}

}  // namespace densekit
