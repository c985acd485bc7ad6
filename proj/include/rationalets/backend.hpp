#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

namespace rationalets {

struct ContentPart {
    enum class Kind { Text, Image };
    Kind kind = Kind::Text;
    std::string value;  // text, or an image data URL

    static ContentPart text(std::string t) { return {Kind::Text, std::move(t)}; }
    static ContentPart image(std::string data_url) { return {Kind::Image, std::move(data_url)}; }

    friend bool operator==(const ContentPart&, const ContentPart&) = default;
};

struct ChatRequest {
    std::string model_id;
    std::string system_text;
    std::vector<ContentPart> user_parts;
    double temperature = 0.0;
    int max_tokens = 1024;
    // Regeneration counter. Part of the digest (so a regenerated request is
    // not served from cache) but never sent on the wire.
    int attempt = 0;

    void validate() const;  // throws PreconditionError

    // Chat-completions body: {model, messages:[system, user{content:[...]}], temperature, max_tokens}.
    nlohmann::json wire_payload() const;

    // SHA-256 over the canonical JSON of every field, image bytes included.
    std::string digest() const;

    // Text parts joined with "\n\n".
    std::string user_text() const;
    std::size_t image_count() const;
};

struct ChatResponse {
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double latency_ms = 0.0;
    bool from_cache = false;
};

// Scripted mock reply: the first rule whose `contains` substring occurs in
// the request text (system + user) and whose `model` (if set) matches wins.
// `responses[attempt]` is returned, clamped to the last entry. Responses may
// use `{{digest:N}}` (first N hex chars of the request digest) and
// `{{digest_mod:N}}` (digest prefix as an integer, modulo N).
struct MockRule {
    std::string contains;
    std::string model;
    std::vector<std::string> responses;
};

struct BackendConfig {
    enum class Kind { Http, Mock };
    Kind kind = Kind::Mock;
    std::string base_url;                    // e.g. https://api.openai.com/v1
    std::string api_key_env_var = "OPENAI_API_KEY";
    int retry_limit = 3;                     // total attempts per transport call
    std::chrono::milliseconds retry_backoff{200};
    std::filesystem::path cache_dir;         // empty disables the response cache
    double requests_per_minute = 0.0;        // 0 = unlimited
    int max_in_flight = 4;
    int timeout_seconds = 120;
    std::string embedding_model = "text-embedding-3-large";
    std::size_t mock_embedding_dim = 256;
    std::filesystem::path replay_ledger;     // mock: line-delimited {digest, response}
    std::vector<MockRule> rules;

    void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const BackendConfig& cfg);
void from_json(const nlohmann::json& j, BackendConfig& cfg);

// Deterministic pseudo-embedding used by the mock backend: lower-cased
// alphanumeric tokens are hashed (FNV-1a) to seed a SplitMix64 stream that
// yields a vector in [-1, 1)^dim; the vectors of all tokens (with
// multiplicity) are summed and L2-normalized.
std::vector<double> mock_text_embedding(const std::string& text, std::size_t dim);

class TokenBucket {
public:
    explicit TokenBucket(double per_minute);
    void acquire();

private:
    double rate_per_second_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mutex_;
};

struct BackendStats {
    std::uint64_t transport_calls = 0;  // requests that reached HTTP or the mock responder
    std::uint64_t cache_hits = 0;
    std::uint64_t retries = 0;
};

// Chat + embedding client. Shareable across threads.
class Backend {
public:
    explicit Backend(BackendConfig cfg);
    ~Backend();
    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    ChatResponse chat(const ChatRequest& request);
    std::vector<double> embed_text(const std::string& text);

    // Raw JSON POST to `<base_url><path>` with retries and pacing (no cache).
    nlohmann::json post_json(const std::string& path, const nlohmann::json& body);

    const BackendConfig& config() const noexcept { return cfg_; }
    BackendStats stats() const;

private:
    struct HttpTarget;

    ChatResponse mock_chat(const ChatRequest& request, const std::string& digest);
    ChatResponse http_chat(const ChatRequest& request);
    std::vector<double> http_embed(const std::string& text);
    std::string http_post(const std::string& path, const std::string& body);

    std::optional<nlohmann::json> cache_load(const std::string& key) const;
    void cache_store(const std::string& key, const nlohmann::json& value) const;

    BackendConfig cfg_;
    std::map<std::string, nlohmann::json> ledger_;
    std::unique_ptr<HttpTarget> target_;
    TokenBucket bucket_;
    std::counting_semaphore<1024> in_flight_;
    std::atomic<std::uint64_t> transport_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> retries_{0};
};

}  // namespace rationalets
