#pragma once

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "densekit/vector.hpp"

namespace testsupport {

inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(dim);
    for (auto& x : v) x = u(rng);
    return v;
}

inline std::vector<float> random_unit_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> g;
    std::vector<double> raw(dim);
    double norm = 0.0;
    for (auto& x : raw) {
        x = g(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    std::vector<float> v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = static_cast<float>(raw[i] / norm);
    return v;
}

inline std::vector<densekit::Embedding> random_embeddings(std::size_t n, std::size_t dim, std::uint64_t seed,
                                                          bool unit = true, const std::string& prefix = "doc") {
    std::mt19937_64 rng(seed);
    std::vector<densekit::Embedding> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({prefix + std::to_string(i), unit ? random_unit_vector(rng, dim) : random_vector(rng, dim)});
    }
    return out;
}

// Plain double-precision inner product, deliberately unlike the library kernel.
inline double naive_dot(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
    return s;
}

struct OracleHit {
    std::string id;
    double score;
};

// Exact top-k by scoring everything and fully sorting.
inline std::vector<OracleHit> brute_force_top_k(const std::vector<densekit::Embedding>& corpus,
                                                const std::vector<float>& query, std::size_t k) {
    std::vector<OracleHit> all;
    all.reserve(corpus.size());
    for (const auto& e : corpus) all.push_back({e.id, naive_dot(e.values, query)});
    std::sort(all.begin(), all.end(), [](const OracleHit& a, const OracleHit& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

inline double overlap_fraction(const densekit::SearchResult& got, const std::vector<std::string>& truth) {
    std::unordered_set<std::string> want(truth.begin(), truth.end());
    std::size_t hits = 0;
    for (const auto& h : got) hits += want.count(h.doc_id);
    return truth.empty() ? 1.0 : double(hits) / double(truth.size());
}

inline std::vector<std::string> ids_of(const densekit::SearchResult& r) {
    std::vector<std::string> ids;
    for (const auto& h : r) ids.push_back(h.doc_id);
    return ids;
}

inline bool close_rel(double a, double b, double rel) {
    return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("densekit-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
}

inline std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) {
        if (c == '\'') q += "'\\''";
        else q += c;
    }
    return q + "'";
}

struct ProcessResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs a command line through the shell, capturing both streams.
inline ProcessResult run_process(const std::vector<std::string>& argv, const TempDir& scratch,
                                 const std::string& env_prefix = "") {
    static std::atomic<int> counter{0};
    const int n = counter++;
    const std::string out_path = scratch.file("stdout." + std::to_string(n));
    const std::string err_path = scratch.file("stderr." + std::to_string(n));
    std::string cmd = env_prefix;
    for (const auto& a : argv) cmd += shell_quote(a) + " ";
    cmd += ">" + shell_quote(out_path) + " 2>" + shell_quote(err_path) + " </dev/null";
    const int status = std::system(cmd.c_str());
    ProcessResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_bytes(out_path);
    r.err = read_bytes(err_path);
    return r;
}

}  // namespace testsupport
