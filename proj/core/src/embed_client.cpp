#include "densekit/embed_client.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "densekit/error.hpp"
#include "densekit/ingest.hpp"

namespace densekit {

std::chrono::milliseconds RetryPolicy::backoff_before(std::size_t attempt) const {
    if (attempt < 2) return std::chrono::milliseconds{0};
    const double scaled = static_cast<double>(base_backoff.count()) *
                          std::pow(multiplier, static_cast<double>(attempt - 2));
    const double capped = std::min(scaled, static_cast<double>(max_backoff.count()));
    return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

void EmbedConfig::validate() const {
    auto bad = [](std::string_view what) { throw Error(ErrorCode::invalid_argument, fmt::format("embed config: {}", what)); };
    if (dimension == 0) bad("dimension must be positive");
    if (max_input_tokens == 0) bad("max_input_tokens must be positive");
    if (!(rate_limit > 0.0) || !std::isfinite(rate_limit)) bad("rate_limit must be positive");
    if (max_parallel == 0) bad("max_parallel must be at least 1");
    if (retry.max_attempts == 0) bad("retry.max_attempts must be at least 1");
    if (retry.base_backoff.count() < 0) bad("retry.base_backoff must not be negative");
    if (!(retry.multiplier >= 1.0)) bad("retry.multiplier must be >= 1");
    if (model_name.empty()) bad("model_name must not be empty");
}

namespace {

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace

std::size_t WhitespaceTokenizer::count(std::string_view text) const {
    std::size_t tokens = 0;
    bool in_token = false;
    for (char c : text) {
        const bool space = is_space(c);
        if (!space && !in_token) ++tokens;
        in_token = !space;
    }
    return tokens;
}

std::string WhitespaceTokenizer::truncate(std::string_view text, std::size_t max_tokens) const {
    std::size_t tokens = 0;
    std::size_t kept_end = 0;  // one past the last character of the last kept token
    bool in_token = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const bool space = is_space(text[i]);
        if (!space && !in_token) {
            if (tokens == max_tokens) return std::string(text.substr(0, kept_end));
            ++tokens;
        }
        if (!space) kept_end = i + 1;
        in_token = !space;
    }
    return std::string(text);
}

std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer) { return tokenizer.count(text); }

std::size_t count_tokens(std::string_view text) { return WhitespaceTokenizer{}.count(text); }

std::vector<float> mock_embed(std::string_view text, std::size_t dimension, std::uint64_t seed) {
    if (dimension == 0) throw Error(ErrorCode::invalid_argument, "mock_embed: dimension must be positive");
    std::uint64_t key = seed;
    std::uint64_t state = fnv1a64(text) ^ splitmix64(key);

    // Box-Muller on a splitmix64 stream: Gaussian components give directions
    // uniform on the sphere once normalized.
    std::vector<double> raw(dimension);
    for (std::size_t i = 0; i < dimension; i += 2) {
        const double u1 = static_cast<double>((splitmix64(state) >> 11) + 1) * 0x1.0p-53;
        const double u2 = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        raw[i] = r * std::cos(2.0 * std::numbers::pi * u2);
        if (i + 1 < dimension) raw[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
    double norm = 0.0;
    for (double v : raw) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<float> out(dimension);
    if (norm == 0.0) {
        out[0] = 1.0f;
        return out;
    }
    for (std::size_t i = 0; i < dimension; ++i) out[i] = static_cast<float>(raw[i] / norm);
    return out;
}

bool is_transient(int status) noexcept {
    return status == 0 || status == 408 || status == 429 || (status >= 500 && status <= 599);
}

// httplib clients are not safe for concurrent use; each in-flight call
// borrows its own.
class HttpEmbeddingBackend::ClientPool {
public:
    ClientPool(std::string base, std::string api_key, std::chrono::seconds timeout)
        : base_(std::move(base)), api_key_(std::move(api_key)), timeout_(timeout) {}

    std::unique_ptr<httplib::Client> acquire() {
        {
            std::lock_guard guard(mutex_);
            if (!idle_.empty()) {
                auto client = std::move(idle_.back());
                idle_.pop_back();
                return client;
            }
        }
        auto client = std::make_unique<httplib::Client>(base_);
        client->set_connection_timeout(timeout_);
        client->set_read_timeout(timeout_);
        client->set_write_timeout(timeout_);
        client->set_keep_alive(true);
        if (!api_key_.empty()) client->set_bearer_token_auth(api_key_);
        return client;
    }

    void release(std::unique_ptr<httplib::Client> client) {
        std::lock_guard guard(mutex_);
        idle_.push_back(std::move(client));
    }

private:
    std::string base_;
    std::string api_key_;
    std::chrono::seconds timeout_;
    std::mutex mutex_;
    std::vector<std::unique_ptr<httplib::Client>> idle_;
};

HttpEmbeddingBackend::HttpEmbeddingBackend(const EmbedConfig& config)
    : model_(config.model_name), api_key_(config.api_key) {
    const std::string& url = config.endpoint_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::invalid_argument, fmt::format("endpoint url '{}' has no scheme", url));
    }
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw Error(ErrorCode::invalid_argument, fmt::format("unsupported endpoint scheme '{}'", scheme));
    }
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string base = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? std::string{} : url.substr(path_start);
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
    clients_ = std::make_unique<ClientPool>(base, api_key_, config.request_timeout);
}

HttpEmbeddingBackend::~HttpEmbeddingBackend() = default;

EmbedResponse HttpEmbeddingBackend::embed(std::string_view text) {
    const nlohmann::json body = {{"model", model_}, {"input", std::string(text)}};
    auto client = clients_->acquire();
    auto res = client->Post(path_ + "/embeddings", body.dump(), "application/json");
    if (!res) {
        // Drop the client: its connection state is unknown.
        return {0, {}, httplib::to_string(res.error())};
    }
    clients_->release(std::move(client));

    EmbedResponse out;
    out.status = res->status;
    if (res->status != 200) {
        out.error = res->body.substr(0, 512);
        return out;
    }
    try {
        const auto doc = nlohmann::json::parse(res->body);
        const auto& values = doc.at("data").at(0).at("embedding");
        out.embedding.reserve(values.size());
        for (const auto& v : values) out.embedding.push_back(v.get<float>());
    } catch (const std::exception& e) {
        out.embedding.clear();
        out.error = fmt::format("malformed response: {}", e.what());
    }
    return out;
}

namespace {

enum class ItemState : std::uint8_t { pending, done, failed };

// Appends completed vectors to the checkpoint file, one flushed line each.
class CheckpointLog {
public:
    explicit CheckpointLog(const std::string& path) {
        bool needs_newline = false;
        if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
            std::ifstream probe(path, std::ios::binary);
            probe.seekg(-1, std::ios::end);
            needs_newline = probe.get() != '\n';
        }
        out_.open(path, std::ios::binary | std::ios::app);
        if (!out_) throw Error(ErrorCode::io, fmt::format("cannot open checkpoint '{}'", path));
        // A partially written last line from an interrupted run is closed off
        // so new records start on a fresh line.
        if (needs_newline) out_ << '\n';
        writer_ = std::make_unique<CorpusWriter>(out_, false);
    }

    void append(const std::string& id, const std::vector<float>& vector) {
        std::lock_guard guard(mutex_);
        writer_->write(CorpusRecord{id, vector, std::nullopt});
        out_.flush();
        if (!out_) throw Error(ErrorCode::io, "checkpoint write failed");
    }

private:
    std::mutex mutex_;
    std::ofstream out_;
    std::unique_ptr<CorpusWriter> writer_;
};

}  // namespace

EmbedBatchResult embed_batch(const EmbedConfig& cfg, std::span<const EmbedInput> inputs,
                             EmbeddingBackend& backend, const EmbedOptions& options) {
    cfg.validate();
    if (inputs.empty()) throw Error(ErrorCode::invalid_argument, "embed_batch: no inputs");

    std::unordered_map<std::string_view, std::size_t> index_of;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].id.empty()) throw Error(ErrorCode::invalid_argument, fmt::format("embed_batch: input {} has an empty id", i));
        if (!index_of.emplace(inputs[i].id, i).second) {
            throw Error(ErrorCode::invalid_argument, fmt::format("embed_batch: duplicate id '{}'", inputs[i].id));
        }
    }

    const WhitespaceTokenizer default_tokenizer;
    const Tokenizer& tokenizer = options.tokenizer ? *options.tokenizer : default_tokenizer;
    Clock& clock = options.clock ? *options.clock : SteadyClock::instance();
    const auto started = clock.now();

    const std::size_t n = inputs.size();
    EmbedBatchResult result;
    EmbedJobReport& report = result.report;
    report.total_inputs = n;

    std::vector<std::string> payload(n);
    for (std::size_t i = 0; i < n; ++i) {
        payload[i] = tokenizer.truncate(inputs[i].text, cfg.max_input_tokens);
        report.token_count_total += tokenizer.count(payload[i]);
    }
    report.token_count_mean = static_cast<double>(report.token_count_total) / static_cast<double>(n);

    std::vector<std::vector<float>> vectors(n);
    std::vector<ItemState> state(n, ItemState::pending);

    std::unique_ptr<CheckpointLog> checkpoint;
    if (options.checkpoint_path) {
        const std::string& path = *options.checkpoint_path;
        if (std::filesystem::exists(path)) {
            ReadOptions ro;
            ro.on_bad_record = BadRecordPolicy::skip_and_count;
            ro.dimension = cfg.dimension;
            ro.compression = Compression::plain;
            CorpusReader reader(path, ro);
            CorpusRecord record;
            while (reader.next(record)) {
                auto it = index_of.find(record.docid);
                if (it == index_of.end() || state[it->second] != ItemState::pending) continue;
                vectors[it->second] = std::move(record.vector);
                state[it->second] = ItemState::done;
                ++report.resumed;
            }
        }
        checkpoint = std::make_unique<CheckpointLog>(path);
    }

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < n; ++i) {
        if (state[i] == ItemState::pending) todo.push_back(i);
    }

    TokenBucket limiter(cfg.rate_limit, 1, clock);
    std::mutex report_lock;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;

    auto process = [&](std::size_t i) {
        EmbedResponse response;
        std::string problem;
        std::size_t retries = 0;
        std::size_t calls = 0;
        for (std::size_t attempt = 1;; ++attempt) {
            if (attempt > 1) {
                clock.sleep_for(cfg.retry.backoff_before(attempt));
                ++retries;
            }
            limiter.acquire();
            ++calls;
            try {
                response = backend.embed(payload[i]);
            } catch (const std::exception& e) {
                response = EmbedResponse{0, {}, e.what()};
            }
            problem.clear();
            if (response.status == 200 && response.error.empty()) {
                if (response.embedding.size() != cfg.dimension) {
                    problem = fmt::format("response has dimension {}, expected {}", response.embedding.size(),
                                          cfg.dimension);
                } else if (!std::all_of(response.embedding.begin(), response.embedding.end(),
                                        [](float v) { return std::isfinite(v); })) {
                    problem = "response contains non-finite values";
                }
                break;
            }
            problem = response.error.empty() ? fmt::format("HTTP {}", response.status) : response.error;
            if (!is_transient(response.status) || attempt >= cfg.retry.max_attempts) break;
        }

        const bool ok = problem.empty();
        if (ok && checkpoint) checkpoint->append(inputs[i].id, response.embedding);
        std::lock_guard guard(report_lock);
        report.retries_performed += retries;
        report.calls_made += calls;
        if (ok) {
            vectors[i] = std::move(response.embedding);
            state[i] = ItemState::done;
        } else {
            state[i] = ItemState::failed;
            report.failures.push_back({inputs[i].id, response.status, problem});
        }
    };

    auto worker = [&] {
        try {
            while (!options.stop.stop_requested()) {
                const std::size_t slot = next++;
                if (slot >= todo.size()) break;
                process(todo[slot]);
            }
        } catch (...) {
            std::lock_guard guard(report_lock);
            if (!failure) failure = std::current_exception();
        }
    };

    const std::size_t workers = std::min(cfg.max_parallel, todo.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t i = 0; i < n; ++i) {
        switch (state[i]) {
            case ItemState::done:
                ++report.succeeded;
                result.embeddings.push_back({inputs[i].id, std::move(vectors[i])});
                break;
            case ItemState::failed: ++report.failed_permanently; break;
            case ItemState::pending: ++report.pending; break;
        }
    }
    std::sort(report.failures.begin(), report.failures.end(),
              [&](const EmbedFailure& a, const EmbedFailure& b) { return index_of.at(a.id) < index_of.at(b.id); });
    report.elapsed = clock.now() - started;
    return result;
}

}  // namespace densekit
