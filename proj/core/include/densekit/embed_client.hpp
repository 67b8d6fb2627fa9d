#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "densekit/rate_limiter.hpp"
#include "densekit/vector.hpp"

namespace densekit {

struct RetryPolicy {
    std::size_t max_attempts = 6;
    std::chrono::milliseconds base_backoff{500};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{60'000};

    /// Delay before attempt number `attempt` (2 = first retry).
    std::chrono::milliseconds backoff_before(std::size_t attempt) const;
};

struct EmbedConfig {
    std::string endpoint_url = "https://api.openai.com/v1";
    std::string api_key;
    std::string model_name = "text-embedding-ada-002";
    std::size_t dimension = 1536;
    std::size_t max_input_tokens = 512;
    double rate_limit = 3500.0;  // calls per minute
    std::size_t max_parallel = 8;
    RetryPolicy retry;
    std::chrono::seconds request_timeout{60};

    /// Throws Error{invalid_argument} on any out-of-range field.
    void validate() const;
};

struct EmbedFailure {
    std::string id;
    int last_status = 0;
    std::string message;
};

struct EmbedJobReport {
    std::size_t total_inputs = 0;
    std::size_t succeeded = 0;           // includes items restored from a checkpoint
    std::size_t failed_permanently = 0;
    std::size_t resumed = 0;             // restored from a checkpoint, no call made
    std::size_t pending = 0;             // left undone because the job was stopped
    std::size_t retries_performed = 0;
    std::size_t calls_made = 0;
    std::chrono::duration<double> elapsed{0};
    std::size_t token_count_total = 0;
    double token_count_mean = 0.0;
    std::vector<EmbedFailure> failures;
};

/// Pluggable token counter. Truncation and statistics use the same instance.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::size_t count(std::string_view text) const = 0;
    /// Prefix of `text` holding at most `max_tokens` tokens.
    virtual std::string truncate(std::string_view text, std::size_t max_tokens) const = 0;
};

/// Splits on runs of ASCII whitespace.
class WhitespaceTokenizer final : public Tokenizer {
public:
    std::size_t count(std::string_view text) const override;
    std::string truncate(std::string_view text, std::size_t max_tokens) const override;
};

std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer);
std::size_t count_tokens(std::string_view text);

/// Deterministic pseudo-embedding of unit length: components are drawn from
/// a generator keyed by a stable hash of the text and the seed.
std::vector<float> mock_embed(std::string_view text, std::size_t dimension, std::uint64_t seed);

/// Outcome of one call. status 200 is success; 0 means the request never
/// produced an HTTP response (connection failure, timeout).
struct EmbedResponse {
    int status = 0;
    std::vector<float> embedding;
    std::string error;
};

/// 408, 429, 5xx and transport failures are worth retrying.
bool is_transient(int status) noexcept;

/// One text in, one vector out. Implementations must be callable from
/// several threads at once.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual EmbedResponse embed(std::string_view text) = 0;
};

/// OpenAI-compatible endpoint: POST {endpoint_url}/embeddings with body
/// {"model": ..., "input": ...}; the vector is read from data[0].embedding.
class HttpEmbeddingBackend final : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(const EmbedConfig& config);
    ~HttpEmbeddingBackend() override;
    EmbedResponse embed(std::string_view text) override;

private:
    class ClientPool;
    std::string path_;
    std::string model_;
    std::string api_key_;
    std::unique_ptr<ClientPool> clients_;
};

class MockEmbeddingBackend final : public EmbeddingBackend {
public:
    MockEmbeddingBackend(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {}
    EmbedResponse embed(std::string_view text) override {
        return {200, mock_embed(text, dimension_, seed_), {}};
    }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

struct EmbedInput {
    std::string id;
    std::string text;
};

struct EmbedOptions {
    const Tokenizer* tokenizer = nullptr;  // whitespace when null
    Clock* clock = nullptr;                // steady clock when null
    /// JSON-lines file of completed vectors. Existing entries are reused;
    /// new successes are appended and flushed as they arrive.
    std::optional<std::string> checkpoint_path;
    std::stop_token stop;
};

struct EmbedBatchResult {
    std::vector<Embedding> embeddings;  // input order, failures omitted
    EmbedJobReport report;
};

/// Embeds every input through `backend`, at most cfg.max_parallel calls in
/// flight and no more than cfg.rate_limit calls per minute. Permanent
/// failures are recorded in the report; the batch itself does not abort.
EmbedBatchResult embed_batch(const EmbedConfig& cfg, std::span<const EmbedInput> inputs,
                             EmbeddingBackend& backend, const EmbedOptions& options = {});

}  // namespace densekit
