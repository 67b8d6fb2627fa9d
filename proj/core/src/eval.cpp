#include "densekit/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "densekit/error.hpp"
#include "densekit/float_text.hpp"

namespace densekit {
namespace {

constexpr std::size_t kRrDepth = 10;
constexpr std::size_t kNdcgDepth = 10;
constexpr std::size_t kRecallDepth = 1000;
constexpr std::size_t kApDepth = 1000;

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) fields.push_back(line.substr(start, i - start));
    }
    return fields;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, fmt::format("cannot open '{}'", path));
    return in;
}

}  // namespace

std::size_t Qrels::judgment_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [q, docs] : judgments) n += docs.size();
    return n;
}

int Qrels::grade(const std::string& query, const std::string& doc) const {
    auto q = judgments.find(query);
    if (q == judgments.end()) return 0;
    auto d = q->second.find(doc);
    return d == q->second.end() ? 0 : d->second;
}

Qrels parse_qrels(std::istream& in) {
    Qrels qrels;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 4) {
            throw Error(ErrorCode::parse, fmt::format("qrels line {}: expected 4 fields, found {}", line_number,
                                                      fields.size()));
        }
        int grade = 0;
        if (!parse_int(fields[3], grade) || grade < 0) {
            throw Error(ErrorCode::parse, fmt::format("qrels line {}: grade '{}' is not a non-negative integer",
                                                      line_number, fields[3]));
        }
        auto& docs = qrels.judgments[std::string(fields[0])];
        auto [it, inserted] = docs.insert_or_assign(std::string(fields[2]), grade);
        if (!inserted) {
            qrels.warnings.push_back(fmt::format("qrels line {}: duplicate judgment for ({}, {}); keeping grade {}",
                                                 line_number, fields[0], fields[2], grade));
        }
    }
    if (in.bad()) throw Error(ErrorCode::io, "qrels read failed");
    return qrels;
}

Qrels parse_qrels_file(const std::string& path) {
    auto in = open_or_throw(path);
    return parse_qrels(in);
}

void write_run(const Run& run, std::ostream& out) {
    const std::string tag = run.tag.empty() ? std::string("densekit") : run.tag;
    std::string line;
    for (const auto& [query, hits] : run.rankings) {
        for (std::size_t i = 0; i < hits.size(); ++i) {
            line.clear();
            fmt::format_to(std::back_inserter(line), "{} Q0 {} {} ", query, hits[i].doc_id, i + 1);
            append_float(line, hits[i].score);
            line += ' ';
            line += tag;
            line += '\n';
            out.write(line.data(), static_cast<std::streamsize>(line.size()));
        }
    }
    if (!out) throw Error(ErrorCode::io, "run write failed");
}

void write_run_file(const Run& run, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, fmt::format("cannot open '{}' for writing", path));
    write_run(run, out);
    out.close();
    if (!out) throw Error(ErrorCode::io, fmt::format("failed writing '{}'", path));
}

Run parse_run(std::istream& in) {
    Run run;
    std::map<std::string, std::unordered_set<std::string>> seen;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != 6) {
            throw Error(ErrorCode::parse, fmt::format("run line {}: expected 6 fields, found {}", line_number,
                                                      fields.size()));
        }
        long long rank = 0;
        if (!parse_int(fields[3], rank)) {
            throw Error(ErrorCode::parse, fmt::format("run line {}: rank '{}' is not an integer", line_number, fields[3]));
        }
        const auto score = parse_float(fields[4]);
        if (!score) {
            throw Error(ErrorCode::parse, fmt::format("run line {}: score '{}' is not a finite number", line_number,
                                                      fields[4]));
        }
        if (run.tag.empty()) run.tag = std::string(fields[5]);

        std::string query(fields[0]);
        std::string doc(fields[2]);
        if (!seen[query].insert(doc).second) {
            run.warnings.push_back(fmt::format("run line {}: repeated doc '{}' for query '{}' ignored", line_number,
                                               doc, query));
            continue;
        }
        run.rankings[query].push_back({std::move(doc), *score});
    }
    if (in.bad()) throw Error(ErrorCode::io, "run read failed");

    for (auto& [query, hits] : run.rankings) {
        if (!std::is_sorted(hits.begin(), hits.end(),
                            [](const ScoredDoc& a, const ScoredDoc& b) { return ranks_before(a, b); })) {
            run.warnings.push_back(fmt::format("run: query '{}' was not in score order; re-sorted", query));
            std::sort(hits.begin(), hits.end(), [](const ScoredDoc& a, const ScoredDoc& b) { return ranks_before(a, b); });
        }
    }
    return run;
}

Run parse_run_file(const std::string& path) {
    auto in = open_or_throw(path);
    return parse_run(in);
}

double rr_at_k(std::span<const std::string> ranking, const RelevantSet& relevant, std::size_t k) {
    if (k == 0) throw Error(ErrorCode::invalid_argument, "rr_at_k: k must be at least 1");
    const std::size_t depth = std::min(k, ranking.size());
    for (std::size_t r = 0; r < depth; ++r) {
        if (relevant.contains(ranking[r])) return 1.0 / static_cast<double>(r + 1);
    }
    return 0.0;
}

double average_precision(std::span<const std::string> ranking, const RelevantSet& relevant, std::size_t cutoff) {
    if (relevant.empty()) return 0.0;
    const std::size_t depth = std::min(cutoff, ranking.size());
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t r = 0; r < depth; ++r) {
        if (relevant.contains(ranking[r])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    return sum / static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const std::string> ranking, const GradeMap& grades, std::size_t k) {
    if (k == 0) throw Error(ErrorCode::invalid_argument, "ndcg_at_k: k must be at least 1");
    std::vector<int> ideal;
    for (const auto& [doc, grade] : grades) {
        if (grade > 0) ideal.push_back(grade);
    }
    if (ideal.empty()) return 0.0;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) {
        idcg += ideal[r] / std::log2(static_cast<double>(r + 2));
    }
    double dcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
        auto it = grades.find(ranking[r]);
        if (it != grades.end() && it->second > 0) dcg += it->second / std::log2(static_cast<double>(r + 2));
    }
    return dcg / idcg;
}

double recall_at_k(std::span<const std::string> ranking, const RelevantSet& relevant, std::size_t k) {
    if (relevant.empty()) return 0.0;
    const std::size_t depth = std::min(k, ranking.size());
    std::size_t found = 0;
    for (std::size_t r = 0; r < depth; ++r) {
        if (relevant.contains(ranking[r])) ++found;
    }
    return static_cast<double>(found) / static_cast<double>(relevant.size());
}

MetricReport evaluate(const Run& run, const Qrels& qrels, int binary_threshold) {
    if (binary_threshold < 1) {
        throw Error(ErrorCode::invalid_argument, "evaluate: binary relevance threshold must be at least 1");
    }
    MetricReport report;
    for (const auto& [query, hits] : run.rankings) {
        if (!qrels.judgments.contains(query)) {
            report.warnings.push_back(fmt::format("query '{}' has no judgments; excluded", query));
        }
    }

    std::vector<std::string> ranking;
    for (const auto& [query, grades] : qrels.judgments) {
        ranking.clear();
        auto it = run.rankings.find(query);
        if (it == run.rankings.end()) {
            report.warnings.push_back(fmt::format("query '{}' is judged but absent from the run; scored as zero", query));
        } else {
            for (const auto& hit : it->second) ranking.push_back(hit.doc_id);
        }

        RelevantSet relevant;
        bool any_positive = false;
        for (const auto& [doc, grade] : grades) {
            if (grade >= binary_threshold) relevant.insert(doc);
            any_positive = any_positive || grade > 0;
        }
        if (relevant.empty()) {
            report.warnings.push_back(fmt::format(
                "query '{}' has no document at or above relevance threshold {}; RR, AP and recall are 0", query,
                binary_threshold));
        }
        if (!any_positive) {
            report.warnings.push_back(fmt::format("query '{}' has no positive grade; nDCG is 0", query));
        }

        QueryMetrics m;
        m.rr_at_10 = rr_at_k(ranking, relevant, kRrDepth);
        m.ap = average_precision(ranking, relevant, kApDepth);
        m.ndcg_at_10 = ndcg_at_k(ranking, grades, kNdcgDepth);
        m.r_at_1k = recall_at_k(ranking, relevant, kRecallDepth);
        report.per_query.emplace(query, m);
    }

    if (!report.per_query.empty()) {
        QueryMetrics sum;
        for (const auto& [query, m] : report.per_query) {
            sum.rr_at_10 += m.rr_at_10;
            sum.ap += m.ap;
            sum.ndcg_at_10 += m.ndcg_at_10;
            sum.r_at_1k += m.r_at_1k;
        }
        const auto n = static_cast<double>(report.per_query.size());
        report.mean = {sum.rr_at_10 / n, sum.ap / n, sum.ndcg_at_10 / n, sum.r_at_1k / n};
    }
    return report;
}

void write_metric_table(const MetricReport& report, std::ostream& out) {
    std::size_t width = 5;
    for (const auto& [query, m] : report.per_query) width = std::max(width, query.size());
    auto row = [&](std::string_view query, const QueryMetrics& m) {
        out << fmt::format("{:<{}}  {:>8.4f}  {:>8.4f}  {:>8.4f}  {:>8.4f}\n", query, width, m.rr_at_10, m.ap,
                           m.ndcg_at_10, m.r_at_1k);
    };
    out << fmt::format("{:<{}}  {:>8}  {:>8}  {:>8}  {:>8}\n", "query", width, "RR@10", "AP", "nDCG@10", "R@1k");
    for (const auto& [query, m] : report.per_query) row(query, m);
    row("all", report.mean);
}

void write_metric_json_lines(const MetricReport& report, std::ostream& out) {
    auto line = [&](const std::string& query, const QueryMetrics& m, std::optional<std::size_t> count) {
        nlohmann::ordered_json j;
        j["query"] = query;
        j["rr@10"] = m.rr_at_10;
        j["ap"] = m.ap;
        j["ndcg@10"] = m.ndcg_at_10;
        j["r@1k"] = m.r_at_1k;
        if (count) j["num_queries"] = *count;
        out << j.dump() << '\n';
    };
    for (const auto& [query, m] : report.per_query) line(query, m, std::nullopt);
    line("all", report.mean, report.per_query.size());
}

}  // namespace densekit
