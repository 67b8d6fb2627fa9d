#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <unordered_set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "densekit/error.hpp"
#include "densekit/flat_index.hpp"
#include "densekit/ingest.hpp"

namespace densekit::cli {
namespace {

Compression input_compression(bool gz) { return gz ? Compression::gzip : Compression::automatic; }

std::vector<Embedding> read_queries(const std::string& path, bool gz) {
    ReadOptions ro;
    ro.compression = input_compression(gz);
    CorpusReader reader(path, ro);
    std::vector<Embedding> queries;
    std::unordered_set<std::string> seen;
    CorpusRecord record;
    while (reader.next(record)) {
        if (!seen.insert(record.docid).second) {
            throw Error(ErrorCode::parse, fmt::format("{}: duplicate query id '{}'", path, record.docid));
        }
        queries.push_back({std::move(record.docid), std::move(record.vector)});
    }
    if (queries.empty()) throw Error(ErrorCode::parse, fmt::format("{}: no queries", path));
    return queries;
}

std::string read_api_key(const EmbedArgs& args) {
    std::string key;
    if (args.key_file) {
        std::ifstream in(*args.key_file);
        if (!in) throw Error(ErrorCode::io, fmt::format("cannot read key file '{}'", *args.key_file));
        std::getline(in, key);
        while (!key.empty() && (key.back() == '\r' || key.back() == ' ')) key.pop_back();
    } else if (const char* env = std::getenv(kApiKeyEnv)) {
        key = env;
    }
    if (key.empty()) {
        throw Error(ErrorCode::invalid_argument,
                    fmt::format("no API key: set {} or pass --key-file (or use --mock)", kApiKeyEnv));
    }
    return key;
}

// Either index type behind one search function.
struct LoadedIndex {
    std::unique_ptr<FlatIndex> flat;
    std::unique_ptr<HnswIndex> hnsw;

    std::size_t dimension() const { return flat ? flat->dimension() : hnsw->dimension(); }
    std::size_t size() const { return flat ? flat->size() : hnsw->size(); }

    SearchFn searcher(const SearchParams& sp) const {
        if (flat) {
            const FlatIndex* index = flat.get();
            return [index, k = sp.k](std::span<const float> q) { return index->search(q, k); };
        }
        const HnswIndex* index = hnsw.get();
        return [index, sp](std::span<const float> q) { return index->search(q, sp); };
    }
};

LoadedIndex load_index(const std::string& path, const std::string& type, bool gz) {
    LoadedIndex loaded;
    if (type == "hnsw") {
        loaded.hnsw = std::make_unique<HnswIndex>(HnswIndex::load_file(path));
    } else if (type == "flat") {
        ReadOptions ro;
        ro.compression = input_compression(gz);
        CorpusReader reader(path, ro);
        CorpusRecord record;
        while (reader.next(record)) {
            if (!loaded.flat) loaded.flat = std::make_unique<FlatIndex>(record.vector.size());
            loaded.flat->add(std::move(record.docid), record.vector);
        }
        if (!loaded.flat) throw Error(ErrorCode::empty_index, fmt::format("{}: corpus is empty", path));
        loaded.flat->freeze();
    } else {
        throw Error(ErrorCode::invalid_argument, fmt::format("unknown index type '{}'", type));
    }
    return loaded;
}

void check_query_dimension(const LoadedIndex& index, const std::vector<Embedding>& queries) {
    const std::size_t qdim = queries.front().dimension();
    if (qdim != index.dimension()) {
        throw Error(ErrorCode::dimension_mismatch,
                    fmt::format("query dimension {} does not match index dimension {}", qdim, index.dimension()));
    }
}

}  // namespace

int exit_code_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_argument: return exit_usage;
        case ErrorCode::dimension_mismatch:
        case ErrorCode::conflict:
        case ErrorCode::empty_index:
        case ErrorCode::corrupt_index:
        case ErrorCode::parse: return exit_data;
        case ErrorCode::io:
        case ErrorCode::network:
        case ErrorCode::frozen: return exit_runtime;
    }
    return exit_runtime;
}

std::string partial_path(const std::string& output) { return output + ".partial"; }

EmbedJobReport cmd_embed(const EmbedArgs& args, std::ostream& out, std::ostream& err, std::stop_token stop) {
    EmbedConfig cfg;
    cfg.dimension = args.dim;
    cfg.max_input_tokens = args.max_tokens;
    cfg.max_parallel = args.threads;
    cfg.retry.max_attempts = args.max_attempts;
    cfg.endpoint_url = args.endpoint;
    cfg.model_name = args.model;
    // Mock vectors are computed locally; there is no quota to respect.
    cfg.rate_limit = args.rate_limit.value_or(args.mock ? 1e12 : 3500.0);
    cfg.validate();

    std::unique_ptr<EmbeddingBackend> backend;
    if (args.mock) {
        backend = std::make_unique<MockEmbeddingBackend>(args.dim, args.seed);
    } else {
        cfg.api_key = read_api_key(args);
        backend = std::make_unique<HttpEmbeddingBackend>(cfg);
    }

    ReadOptions ro;
    ro.require_vector = false;
    CorpusReader reader(args.input, ro);
    std::vector<EmbedInput> inputs;
    CorpusRecord record;
    while (reader.next(record)) {
        if (!record.text) {
            throw Error(ErrorCode::parse, fmt::format("{} line {}: missing \"text\"", args.input, reader.line_number()));
        }
        inputs.push_back({std::move(record.docid), std::move(*record.text)});
    }
    if (inputs.empty()) throw Error(ErrorCode::parse, fmt::format("{}: no input records", args.input));

    EmbedOptions options;
    options.checkpoint_path = partial_path(args.output);
    options.stop = stop;
    auto result = embed_batch(cfg, inputs, *backend, options);
    const EmbedJobReport& report = result.report;

    if (report.pending == 0) {
        std::vector<CorpusRecord> records;
        records.reserve(result.embeddings.size());
        for (auto& e : result.embeddings) records.push_back({std::move(e.id), std::move(e.values), std::nullopt});
        write_corpus_file(records, args.output, args.gz || has_gzip_suffix(args.output));
        if (report.failed_permanently == 0) std::filesystem::remove(*options.checkpoint_path);
    }

    for (const auto& f : report.failures) {
        fmt::print(err, "embed: '{}' failed (status {}): {}\n", f.id, f.last_status, f.message);
    }
    fmt::print(out,
               "inputs: {}\nsucceeded: {}\nresumed: {}\nfailed: {}\npending: {}\nretries: {}\ncalls: {}\n"
               "elapsed_seconds: {:.3f}\ntokens_total: {}\ntokens_mean: {:.4f}\n",
               report.total_inputs, report.succeeded, report.resumed, report.failed_permanently, report.pending,
               report.retries_performed, report.calls_made, report.elapsed.count(), report.token_count_total,
               report.token_count_mean);
    return result.report;
}

IndexReport cmd_index(const IndexArgs& args, std::ostream& out, std::ostream& err) {
    const std::uint64_t seed = args.seed ? *args.seed : std::random_device{}() * 0x100000001ull ^ std::random_device{}();
    const HnswParams params = HnswParams::for_m(args.m, args.ef_construction, seed);
    params.validate();
    if (!args.seed) fmt::print(err, "index: no --seed given; using {}\n", seed);

    const auto started = std::chrono::steady_clock::now();
    ReadOptions ro;
    ro.compression = input_compression(args.gz);
    CorpusReader reader(args.input, ro);

    std::unique_ptr<HnswIndex> index;
    std::vector<Embedding> chunk;
    constexpr std::size_t kChunk = 100'000;
    auto flush = [&] {
        if (!chunk.empty()) index->insert_batch(chunk, args.threads);
        chunk.clear();
    };
    CorpusRecord record;
    while (reader.next(record)) {
        if (!index) index = std::make_unique<HnswIndex>(record.vector.size(), params);
        if (args.threads <= 1) {
            index->insert(std::move(record.docid), record.vector);
            continue;
        }
        chunk.push_back({std::move(record.docid), std::move(record.vector)});
        if (chunk.size() >= kChunk) flush();
    }
    if (!index) throw Error(ErrorCode::parse, fmt::format("{}: corpus is empty", args.input));
    flush();
    index->freeze();

    std::ofstream image(args.output, std::ios::binary | std::ios::trunc);
    if (!image) throw Error(ErrorCode::io, fmt::format("cannot open '{}' for writing", args.output));
    IndexReport report;
    report.image_bytes = index->save(image);
    image.close();
    if (!image) throw Error(ErrorCode::io, fmt::format("failed writing '{}'", args.output));

    report.nodes = index->size();
    report.max_level = index->max_level();
    report.params = index->params();
    report.threads = args.threads;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    fmt::print(out,
               "nodes: {}\ndimension: {}\nmax_level: {}\nm: {}\nm0: {}\nef_construction: {}\nseed: {}\n"
               "threads: {}\nimage_bytes: {}\nwall_seconds: {:.3f}\n",
               report.nodes, index->dimension(), report.max_level, report.params.m, report.params.m0,
               report.params.ef_construction, report.params.seed, report.threads, report.image_bytes,
               report.seconds);
    return report;
}

Run cmd_search(const SearchArgs& args, std::ostream& out, std::ostream& err) {
    if (args.k == 0) throw Error(ErrorCode::invalid_argument, "-k must be at least 1");
    if (args.ef_search == 0) throw Error(ErrorCode::invalid_argument, "--ef-search must be at least 1");
    const LoadedIndex index = load_index(args.index, args.index_type, args.gz);
    const auto queries = read_queries(args.queries, args.gz);
    check_query_dimension(index, queries);

    SearchParams sp{args.ef_search, args.k};
    if (index.hnsw && sp.clamps()) {
        fmt::print(err, "search: --ef-search {} is below -k {}; using {}\n", sp.ef_search, sp.k, sp.effective_ef());
    }
    auto results = run_queries(queries, index.searcher(sp), args.threads);

    Run run;
    run.tag = args.tag;
    for (std::size_t i = 0; i < queries.size(); ++i) run.rankings.emplace(queries[i].id, std::move(results[i]));
    if (args.run) {
        write_run_file(run, *args.run);
    } else {
        write_run(run, out);
    }
    return run;
}

MetricReport cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
    const Qrels qrels = parse_qrels_file(args.qrels);
    const Run run = parse_run_file(args.run);
    MetricReport report = evaluate(run, qrels, args.rel_threshold);

    for (const auto& w : qrels.warnings) fmt::print(err, "warning: {}\n", w);
    for (const auto& w : run.warnings) fmt::print(err, "warning: {}\n", w);
    for (const auto& w : report.warnings) fmt::print(err, "warning: {}\n", w);

    write_metric_table(report, out);
    if (args.output) {
        std::ofstream json(*args.output, std::ios::trunc);
        if (!json) throw Error(ErrorCode::io, fmt::format("cannot open '{}' for writing", *args.output));
        write_metric_json_lines(report, json);
        if (!json) throw Error(ErrorCode::io, fmt::format("failed writing '{}'", *args.output));
    }
    return report;
}

BenchReport cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
    if (args.k == 0) throw Error(ErrorCode::invalid_argument, "-k must be at least 1");
    const LoadedIndex index = load_index(args.index, args.index_type, args.gz);
    const auto queries = read_queries(args.queries, args.gz);
    check_query_dimension(index, queries);

    SearchParams sp{args.ef_search, args.k};
    if (index.hnsw && sp.clamps()) {
        fmt::print(err, "bench: --ef-search {} is below -k {}; using {}\n", sp.ef_search, sp.k, sp.effective_ef());
    }
    BenchReport report =
        run_bench(queries, index.searcher(sp), args.threads, args.trials, args.warmup, args.k, sp.effective_ef());

    fmt::print(out, "queries: {}\nthreads: {}\nk: {}\nef_search: {}\nwarmup_runs: {}\ntrials: {}\n",
               report.query_count, report.threads, report.k, report.ef_search, report.warmup_runs, report.trials);
    for (std::size_t i = 0; i < report.trial_seconds.size(); ++i) {
        fmt::print(out, "trial_{}_seconds: {:.6f}\n", i + 1, report.trial_seconds[i]);
    }
    fmt::print(out, "qps: {:.3f}\n", report.queries_per_second);

    if (args.output) {
        nlohmann::ordered_json j;
        j["queries_per_second"] = report.queries_per_second;
        j["trials"] = report.trials;
        j["warmup_runs"] = report.warmup_runs;
        j["passes_executed"] = report.passes_executed;
        j["threads"] = report.threads;
        j["query_count"] = report.query_count;
        j["k"] = report.k;
        j["ef_search"] = report.ef_search;
        j["trial_seconds"] = report.trial_seconds;
        std::ofstream json(*args.output, std::ios::trunc);
        if (!json) throw Error(ErrorCode::io, fmt::format("cannot open '{}' for writing", *args.output));
        json << j.dump(2) << '\n';
    }
    return report;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::stop_token stop) {
    CLI::App app{"densekit: dense retrieval with HNSW search and TREC-style evaluation"};
    app.require_subcommand(1);

    EmbedArgs embed;
    auto* embed_cmd = app.add_subcommand("embed", "Embed a JSON-lines text file into a vector corpus");
    embed_cmd->add_option("--input", embed.input, "Records with \"docid\" and \"text\"")->required();
    embed_cmd->add_option("--output", embed.output, "Vector corpus to write")->required();
    embed_cmd->add_flag("--mock", embed.mock, "Use the deterministic offline embedder");
    embed_cmd->add_option("--dim", embed.dim, "Embedding dimension")->capture_default_str();
    embed_cmd->add_option("--seed", embed.seed, "Mock embedder seed")->capture_default_str();
    embed_cmd->add_option("--threads", embed.threads, "Requests in flight")->capture_default_str();
    embed_cmd->add_option("--endpoint", embed.endpoint, "Base URL of the embeddings API")->capture_default_str();
    embed_cmd->add_option("--model", embed.model, "Model name sent with each request")->capture_default_str();
    double rate_limit = 3500.0;
    auto* rate_opt = embed_cmd->add_option("--rate-limit", rate_limit, "Calls per minute (default 3500; unlimited with --mock)");
    embed_cmd->add_option("--max-tokens", embed.max_tokens, "Truncate inputs to this many tokens")->capture_default_str();
    embed_cmd->add_option("--max-attempts", embed.max_attempts, "Attempts per input")->capture_default_str();
    std::string key_file;
    auto* key_opt = embed_cmd->add_option("--key-file", key_file, "File holding the API key");
    embed_cmd->add_flag("--gz", embed.gz, "gzip the output");

    IndexArgs index;
    auto* index_cmd = app.add_subcommand("index", "Build an HNSW index image from a vector corpus");
    index_cmd->add_option("--input", index.input, "Vector corpus (JSON lines, optionally gzip)")->required();
    index_cmd->add_option("--output", index.output, "Index image to write")->required();
    index_cmd->add_option("-m", index.m, "Max links per node")->capture_default_str();
    index_cmd->add_option("--ef-construction", index.ef_construction, "Candidate pool while inserting")->capture_default_str();
    index_cmd->add_option("--threads", index.threads, "Build workers (1 = deterministic)")->capture_default_str();
    std::uint64_t index_seed = 0;
    auto* index_seed_opt = index_cmd->add_option("--seed", index_seed, "Level-sampling seed (random when omitted)");
    index_cmd->add_flag("--gz", index.gz, "Force gzip decoding of the input");

    SearchArgs search;
    auto* search_cmd = app.add_subcommand("search", "Search queries and write a TREC run");
    search_cmd->add_option("--index", search.index, "Index image, or vector corpus with --index-type flat")->required();
    search_cmd->add_option("--index-type", search.index_type, "hnsw or flat")
        ->check(CLI::IsMember({"hnsw", "flat"}))
        ->capture_default_str();
    search_cmd->add_option("--queries", search.queries, "Query vectors (JSON lines)")->required();
    std::string run_path;
    auto* run_opt = search_cmd->add_option("--run", run_path, "Run file to write (stdout when omitted)");
    search_cmd->add_option("-k", search.k, "Hits per query")->capture_default_str();
    search_cmd->add_option("--ef-search", search.ef_search, "Candidate pool while searching")->capture_default_str();
    search_cmd->add_option("--threads", search.threads, "Query workers")->capture_default_str();
    search_cmd->add_option("--tag", search.tag, "Run tag")->capture_default_str();
    search_cmd->add_flag("--gz", search.gz, "Force gzip decoding of inputs");

    EvaluateArgs evaluate;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score a run against qrels");
    eval_cmd->add_option("--run", evaluate.run, "TREC run file")->required();
    eval_cmd->add_option("--qrels", evaluate.qrels, "TREC qrels file")->required();
    eval_cmd->add_option("--rel-threshold", evaluate.rel_threshold, "Minimum grade counted as relevant")
        ->capture_default_str();
    std::string eval_output;
    auto* eval_output_opt = eval_cmd->add_option("--output", eval_output, "Write JSON lines here");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Measure search throughput");
    bench_cmd->add_option("--index", bench.index, "Index image, or vector corpus with --index-type flat")->required();
    bench_cmd->add_option("--index-type", bench.index_type, "hnsw or flat")
        ->check(CLI::IsMember({"hnsw", "flat"}))
        ->capture_default_str();
    bench_cmd->add_option("--queries", bench.queries, "Query vectors (JSON lines)")->required();
    bench_cmd->add_option("-k", bench.k, "Hits per query")->capture_default_str();
    bench_cmd->add_option("--ef-search", bench.ef_search, "Candidate pool while searching")->capture_default_str();
    bench_cmd->add_option("--threads", bench.threads, "Query workers")->capture_default_str();
    bench_cmd->add_option("--trials", bench.trials, "Timed passes")->capture_default_str();
    bench_cmd->add_option("--warmup", bench.warmup, "Untimed passes first")->capture_default_str();
    std::string bench_output;
    auto* bench_output_opt = bench_cmd->add_option("--output", bench_output, "Write a JSON report here");
    bench_cmd->add_flag("--gz", bench.gz, "Force gzip decoding of inputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*embed_cmd) {
            if (*rate_opt) embed.rate_limit = rate_limit;
            if (*key_opt) embed.key_file = key_file;
            const auto report = cmd_embed(embed, out, err, stop);
            if (report.pending > 0) {
                fmt::print(err, "embed: stopped with {} inputs pending; rerun to resume\n", report.pending);
                return exit_runtime;
            }
            return report.failed_permanently > 0 ? exit_runtime : exit_ok;
        }
        if (*index_cmd) {
            if (*index_seed_opt) index.seed = index_seed;
            cmd_index(index, out, err);
        } else if (*search_cmd) {
            if (*run_opt) search.run = run_path;
            cmd_search(search, out, err);
        } else if (*eval_cmd) {
            if (*eval_output_opt) evaluate.output = eval_output;
            cmd_evaluate(evaluate, out, err);
        } else if (*bench_cmd) {
            if (*bench_output_opt) bench.output = bench_output;
            cmd_bench(bench, out, err);
        }
    } catch (const Error& e) {
        fmt::print(err, "error ({}): {}\n", to_string(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return exit_runtime;
    }
    return exit_ok;
}

}  // namespace densekit::cli
