#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "llmcodec/model.hpp"
#include "llmcodec/quantizer.hpp"

namespace llmcodec::icl {

enum class TaskKind { Classification, Generation };

struct Demonstration {
    std::string input;   // rendered tokens (classification) or context text (generation)
    std::string output;  // label (classification) or rendered tokens (generation)
};

struct Episode {
    TaskKind task_kind = TaskKind::Classification;
    std::optional<std::string> induction;
    std::vector<std::string> label_set;
    std::vector<Demonstration> demonstrations;
    /// Extra copies of the demonstration block placed before the query.
    std::size_t repeats = 0;
    std::string query;
    /// Gold label used for scoring classification episodes.
    std::string answer;
    LayerSelection layer_selection{0};
};

std::string build_classification_prompt(const Episode& ep);
std::string build_generation_prompt(const Episode& ep);
std::string build_prompt(const Episode& ep);

std::vector<Episode> load_episodes(const std::filesystem::path& path);
void save_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct CompletionRequest {
    std::string prompt;
    int max_tokens = 16;
    double temperature = 0.0;  // greedy
};

struct CompletionResponse {
    std::string text;
    std::string finish_reason;
};

/// Implementations must be safe to call from several threads at once.
class LmClient {
public:
    virtual ~LmClient() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) const = 0;
};

/// Validates the request, then delegates to `client`.
CompletionResponse lm_complete(const LmClient& client, const CompletionRequest& request);

/// Prompt blocks recovered from a rendered prompt.
struct ParsedPrompt {
    std::vector<Demonstration> demonstrations;
    std::string query;
};
ParsedPrompt parse_prompt(std::string_view prompt);

/// Returns the output of the demonstration whose input shares the most
/// distinct whitespace tokens with the query (lowest index on ties).
class NearestDemoClient : public LmClient {
public:
    CompletionResponse complete(const CompletionRequest& request) const override;
};

class ConstantClient : public LmClient {
public:
    explicit ConstantClient(std::string text) : text_(std::move(text)) {}
    CompletionResponse complete(const CompletionRequest& request) const override;

private:
    std::string text_;
};

/// Looks the query up in a fixed table; unknown queries get `fallback`.
class TableClient : public LmClient {
public:
    TableClient(std::map<std::string, std::string> table, std::string fallback = {})
        : table_(std::move(table)), fallback_(std::move(fallback)) {}
    CompletionResponse complete(const CompletionRequest& request) const override;

private:
    std::map<std::string, std::string> table_;
    std::string fallback_;
};

struct HttpClientOptions {
    std::string base_url;
    std::string api_key;
    std::string model = "llama-2-7b";
    std::chrono::seconds timeout{60};
};

/// OpenAI-style completions endpoint: POST <base_url>/v1/completions.
class HttpClient : public LmClient {
public:
    explicit HttpClient(HttpClientOptions options);
    /// Reads LLMCODEC_LM_URL (required) and LLMCODEC_LM_KEY (optional).
    static HttpClient from_env();
    CompletionResponse complete(const CompletionRequest& request) const override;

private:
    HttpClientOptions options_;
};

/// Retries transient failures (timeouts, connection errors, 429 and 5xx) up to
/// `retries` times after the first attempt.
class RetryingClient : public LmClient {
public:
    RetryingClient(const LmClient& inner, int retries = 3, std::chrono::milliseconds backoff = std::chrono::milliseconds(200))
        : inner_(inner), retries_(retries), backoff_(backoff) {}
    CompletionResponse complete(const CompletionRequest& request) const override;

private:
    const LmClient& inner_;
    int retries_;
    std::chrono::milliseconds backoff_;
};

// ---------------------------------------------------------------------------

/// Lowercases and trims.
std::string normalize_completion(std::string_view text);
/// First label that prefixes the normalized completion, else the first
/// contained in it.
std::optional<std::string> extract_label(std::string_view completion, const std::vector<std::string>& label_set);

struct EpisodeResult {
    std::size_t index = 0;  // position in the scored list
    std::string prompt_hash;
    std::string completion;
    std::optional<std::string> prediction;
    bool correct = false;
};

struct ClassificationReport {
    std::vector<EpisodeResult> episodes;  // completed episodes, input order
    std::size_t total = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    /// Set when a client error aborted scoring; `episodes` is then partial.
    std::optional<std::string> error;
};

struct ScoreOptions {
    std::size_t max_in_flight = 4;
    int max_tokens = 16;
};

ClassificationReport score_classification(const std::vector<Episode>& episodes, const LmClient& client,
                                          const ScoreOptions& options = {});

/// Completion text up to the first "###", trimmed.
std::string truncate_completion(std::string_view completion);

/// Prompts for a token stream, parses it against the model's codebooks and
/// decodes it to audio.
AudioBuffer run_generation(const Episode& ep, const LmClient& client, const nn::ToyCodecModel& model,
                           int max_tokens = 16);

}  // namespace llmcodec::icl
