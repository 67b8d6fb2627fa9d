#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "densekit/vector.hpp"

namespace densekit {

using RelevantSet = std::unordered_set<std::string>;
using GradeMap = std::unordered_map<std::string, int>;

/// Relevance judgments, query id -> doc id -> grade (>= 0).
struct Qrels {
    std::map<std::string, GradeMap> judgments;
    std::vector<std::string> warnings;

    std::size_t judgment_count() const noexcept;
    int grade(const std::string& query, const std::string& doc) const;
};

/// Four-column TREC qrels: `qid iter docid grade`. The iter column is ignored;
/// a repeated (qid, docid) pair keeps the later grade and records a warning.
Qrels parse_qrels(std::istream& in);
Qrels parse_qrels_file(const std::string& path);

/// Ranked output per query, kept in canonical order.
struct Run {
    std::string tag;
    std::map<std::string, SearchResult> rankings;
    std::vector<std::string> warnings;
};

/// Six-column TREC run: `qid Q0 docid rank score tag`, ranks 1-based.
void write_run(const Run& run, std::ostream& out);
void write_run_file(const Run& run, const std::string& path);

/// Parses a run and re-sorts every query canonically (score desc, doc id
/// asc), warning when the file order disagreed. Repeated doc ids keep the
/// first occurrence.
Run parse_run(std::istream& in);
Run parse_run_file(const std::string& path);

// Per-query metrics. `ranking` lists doc ids best first.
double rr_at_k(std::span<const std::string> ranking, const RelevantSet& relevant, std::size_t k);
double average_precision(std::span<const std::string> ranking, const RelevantSet& relevant,
                         std::size_t cutoff = 1000);
/// Linear gain, 1/log2(rank + 1) discount; 0 when no grade is positive.
double ndcg_at_k(std::span<const std::string> ranking, const GradeMap& grades, std::size_t k);
double recall_at_k(std::span<const std::string> ranking, const RelevantSet& relevant, std::size_t k);

struct QueryMetrics {
    double rr_at_10 = 0.0;
    double ap = 0.0;
    double ndcg_at_10 = 0.0;
    double r_at_1k = 0.0;

    friend bool operator==(const QueryMetrics&, const QueryMetrics&) = default;
};

struct MetricReport {
    std::map<std::string, QueryMetrics> per_query;
    QueryMetrics mean;
    std::vector<std::string> warnings;
};

/// Scores every query that has judgments. RR, AP and recall count a doc as
/// relevant when its grade >= binary_threshold; nDCG uses raw grades.
/// Unjudged retrieved docs are non-relevant. Run queries without judgments
/// are skipped; judged queries missing from the run score zero.
MetricReport evaluate(const Run& run, const Qrels& qrels, int binary_threshold = 1);

/// Aligned text table: one row per query and a final "all" row.
void write_metric_table(const MetricReport& report, std::ostream& out);
/// One JSON object per query plus a final {"query": "all", ...} line.
void write_metric_json_lines(const MetricReport& report, std::ostream& out);

}  // namespace densekit
