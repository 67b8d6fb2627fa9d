#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stop_token>
#include <string>

#include "densekit/bench.hpp"
#include "densekit/embed_client.hpp"
#include "densekit/error.hpp"
#include "densekit/eval.hpp"
#include "densekit/hnsw_index.hpp"

namespace densekit::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_data = 2,
    exit_runtime = 3,
};

/// Maps a library error onto the documented exit status.
int exit_code_for(ErrorCode code) noexcept;

inline constexpr const char* kApiKeyEnv = "OPENAI_API_KEY";

struct EmbedArgs {
    std::string input;
    std::string output;
    bool mock = false;
    std::size_t dim = 1536;
    std::uint64_t seed = 0;
    std::size_t threads = 8;
    std::string endpoint = "https://api.openai.com/v1";
    std::string model = "text-embedding-ada-002";
    std::optional<double> rate_limit;  // calls/min; 3500 against an endpoint, unlimited in mock mode
    std::size_t max_tokens = 512;
    std::size_t max_attempts = 6;
    std::optional<std::string> key_file;
    bool gz = false;
};

/// Completed vectors accumulate in "<output>.partial"; a rerun resumes from
/// it. Once every input has succeeded the final file is written in input
/// order and the partial file is removed.
EmbedJobReport cmd_embed(const EmbedArgs& args, std::ostream& out, std::ostream& err,
                         std::stop_token stop = {});
std::string partial_path(const std::string& output);

struct IndexArgs {
    std::string input;
    std::string output;
    std::size_t m = 16;
    std::size_t ef_construction = 100;
    std::size_t threads = 1;
    std::optional<std::uint64_t> seed;  // entropy when unset
    bool gz = false;
};

struct IndexReport {
    std::size_t nodes = 0;
    int max_level = -1;
    double seconds = 0.0;
    HnswParams params;
    std::size_t threads = 1;
    std::uint64_t image_bytes = 0;
};

IndexReport cmd_index(const IndexArgs& args, std::ostream& out, std::ostream& err);

struct SearchArgs {
    std::string index;
    std::string index_type = "hnsw";  // or "flat": --index names a vector corpus
    std::string queries;
    std::optional<std::string> run;   // stdout when unset
    std::size_t k = 1000;
    std::size_t ef_search = 1000;
    std::size_t threads = 1;
    std::string tag = "densekit";
    bool gz = false;
};

Run cmd_search(const SearchArgs& args, std::ostream& out, std::ostream& err);

struct EvaluateArgs {
    std::string run;
    std::string qrels;
    int rel_threshold = 1;
    std::optional<std::string> output;  // JSON lines
};

MetricReport cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);

struct BenchArgs {
    std::string index;
    std::string index_type = "hnsw";
    std::string queries;
    std::size_t k = 1000;
    std::size_t ef_search = 1000;
    std::size_t threads = 16;
    std::size_t trials = 4;
    std::size_t warmup = 1;
    std::optional<std::string> output;  // JSON report
    bool gz = false;
};

BenchReport cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a subcommand. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::stop_token stop = {});

}  // namespace densekit::cli
