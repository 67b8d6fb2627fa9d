#pragma once

// Second implementation of the ranking metrics, written straight from the
// textbook definitions and sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace refmetrics {

using Ranking = std::vector<std::string>;
using Grades = std::map<std::string, int>;

inline std::set<std::string> relevant_set(const Grades& grades, int threshold) {
    std::set<std::string> r;
    for (const auto& [doc, g] : grades) {
        if (g >= threshold) r.insert(doc);
    }
    return r;
}

inline double reciprocal_rank(const Ranking& ranking, const std::set<std::string>& rel, std::size_t k) {
    for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
        if (rel.count(ranking[i])) return 1.0 / double(i + 1);
    }
    return 0.0;
}

// AP = (1/|R|) * sum over relevant positions r <= cutoff of precision@r.
inline double average_precision(const Ranking& ranking, const std::set<std::string>& rel, std::size_t cutoff) {
    if (rel.empty()) return 0.0;
    double sum = 0.0;
    const std::size_t n = std::min(cutoff, ranking.size());
    for (std::size_t r = 1; r <= n; ++r) {
        if (!rel.count(ranking[r - 1])) continue;
        std::size_t hits = 0;
        for (std::size_t j = 1; j <= r; ++j) hits += rel.count(ranking[j - 1]);
        sum += double(hits) / double(r);
    }
    return sum / double(rel.size());
}

inline double ndcg(const Ranking& ranking, const Grades& grades, std::size_t k) {
    auto gain = [&](const std::string& d) {
        auto it = grades.find(d);
        return it == grades.end() ? 0.0 : double(std::max(it->second, 0));
    };
    double dcg = 0.0;
    for (std::size_t i = 0; i < ranking.size() && i < k; ++i) dcg += gain(ranking[i]) / std::log2(double(i) + 2.0);
    std::vector<int> ideal;
    for (const auto& [doc, g] : grades) ideal.push_back(g);
    std::sort(ideal.rbegin(), ideal.rend());
    double idcg = 0.0;
    for (std::size_t i = 0; i < ideal.size() && i < k; ++i) idcg += double(std::max(ideal[i], 0)) / std::log2(double(i) + 2.0);
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

inline double recall(const Ranking& ranking, const std::set<std::string>& rel, std::size_t k) {
    if (rel.empty()) return 0.0;
    std::set<std::string> top(ranking.begin(), ranking.begin() + std::min(k, ranking.size()));
    std::vector<std::string> both;
    std::set_intersection(top.begin(), top.end(), rel.begin(), rel.end(), std::back_inserter(both));
    return double(both.size()) / double(rel.size());
}

struct Means {
    double rr = 0, ap = 0, ndcg = 0, recall = 0;
};

// Means over judged queries; queries absent from `runs` contribute zeros.
inline Means evaluate(const std::map<std::string, Ranking>& runs, const std::map<std::string, Grades>& qrels,
                      int threshold) {
    Means m;
    if (qrels.empty()) return m;
    for (const auto& [q, grades] : qrels) {
        auto it = runs.find(q);
        const Ranking empty;
        const Ranking& ranking = it == runs.end() ? empty : it->second;
        const auto rel = relevant_set(grades, threshold);
        m.rr += reciprocal_rank(ranking, rel, 10);
        m.ap += average_precision(ranking, rel, 1000);
        m.ndcg += ndcg(ranking, grades, 10);
        m.recall += recall(ranking, rel, 1000);
    }
    const double n = double(qrels.size());
    m.rr /= n;
    m.ap /= n;
    m.ndcg /= n;
    m.recall /= n;
    return m;
}

}  // namespace refmetrics
