#include "rationalets/backend.hpp"

#include <httplib.h>

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include "rationalets/error.hpp"
#include "rationalets/util.hpp"

namespace rationalets {

// ---------------------------------------------------------------- requests

void ChatRequest::validate() const {
    if (model_id.empty()) throw PreconditionError("chat request needs a model id");
    if (user_parts.empty()) throw PreconditionError("chat request needs at least one user part");
    if (!(temperature >= 0.0)) throw PreconditionError("temperature must be >= 0");
    if (max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
}

nlohmann::json ChatRequest::wire_payload() const {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& part : user_parts) {
        if (part.kind == ContentPart::Kind::Text) {
            content.push_back({{"type", "text"}, {"text", part.value}});
        } else {
            content.push_back({{"type", "image_url"}, {"image_url", {{"url", part.value}}}});
        }
    }
    nlohmann::json messages = nlohmann::json::array();
    if (!system_text.empty()) messages.push_back({{"role", "system"}, {"content", system_text}});
    messages.push_back({{"role", "user"}, {"content", content}});
    return {{"model", model_id}, {"messages", messages}, {"temperature", temperature}, {"max_tokens", max_tokens}};
}

std::string ChatRequest::digest() const {
    nlohmann::json canon = wire_payload();
    canon["attempt"] = attempt;
    return sha256_hex(canon.dump());
}

std::string ChatRequest::user_text() const {
    std::string out;
    for (const auto& part : user_parts) {
        if (part.kind != ContentPart::Kind::Text) continue;
        if (!out.empty()) out += "\n\n";
        out += part.value;
    }
    return out;
}

std::size_t ChatRequest::image_count() const {
    std::size_t n = 0;
    for (const auto& part : user_parts) n += part.kind == ContentPart::Kind::Image ? 1 : 0;
    return n;
}

// ------------------------------------------------------------------ config

void BackendConfig::validate() const {
    if (kind == Kind::Http && base_url.empty()) throw ConfigError("http backend requires base_url");
    if (retry_limit < 1) throw ConfigError("retry_limit must be >= 1");
    if (max_in_flight < 1 || max_in_flight > 1024) throw ConfigError("max_in_flight must lie in [1, 1024]");
    if (requests_per_minute < 0) throw ConfigError("requests_per_minute must be >= 0");
    if (kind == Kind::Mock && mock_embedding_dim == 0) throw ConfigError("mock_embedding_dim must be positive");
}

void to_json(nlohmann::json& j, const BackendConfig& c) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : c.rules) rules.push_back({{"contains", r.contains}, {"model", r.model}, {"responses", r.responses}});
    j = {
        {"kind", c.kind == BackendConfig::Kind::Http ? "http" : "mock"},
        {"base_url", c.base_url},
        {"api_key_env_var", c.api_key_env_var},
        {"retry_limit", c.retry_limit},
        {"retry_backoff_ms", c.retry_backoff.count()},
        {"cache_dir", c.cache_dir.string()},
        {"requests_per_minute", c.requests_per_minute},
        {"max_in_flight", c.max_in_flight},
        {"timeout_seconds", c.timeout_seconds},
        {"embedding_model", c.embedding_model},
        {"mock_embedding_dim", c.mock_embedding_dim},
        {"replay_ledger", c.replay_ledger.string()},
        {"rules", rules},
    };
}

void from_json(const nlohmann::json& j, BackendConfig& c) {
    if (j.contains("kind")) {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "http") {
            c.kind = BackendConfig::Kind::Http;
        } else if (kind == "mock") {
            c.kind = BackendConfig::Kind::Mock;
        } else {
            throw ConfigError("unknown backend kind '" + kind + "'");
        }
    }
    if (j.contains("base_url")) j.at("base_url").get_to(c.base_url);
    if (j.contains("api_key_env_var")) j.at("api_key_env_var").get_to(c.api_key_env_var);
    if (j.contains("retry_limit")) j.at("retry_limit").get_to(c.retry_limit);
    if (j.contains("retry_backoff_ms")) c.retry_backoff = std::chrono::milliseconds(j.at("retry_backoff_ms").get<long>());
    if (j.contains("cache_dir")) c.cache_dir = j.at("cache_dir").get<std::string>();
    if (j.contains("requests_per_minute")) j.at("requests_per_minute").get_to(c.requests_per_minute);
    if (j.contains("max_in_flight")) j.at("max_in_flight").get_to(c.max_in_flight);
    if (j.contains("timeout_seconds")) j.at("timeout_seconds").get_to(c.timeout_seconds);
    if (j.contains("embedding_model")) j.at("embedding_model").get_to(c.embedding_model);
    if (j.contains("mock_embedding_dim")) j.at("mock_embedding_dim").get_to(c.mock_embedding_dim);
    if (j.contains("replay_ledger")) c.replay_ledger = j.at("replay_ledger").get<std::string>();
    if (j.contains("rules")) {
        c.rules.clear();
        for (const auto& r : j.at("rules")) {
            MockRule rule;
            rule.contains = r.value("contains", std::string{});
            rule.model = r.value("model", std::string{});
            if (r.contains("responses")) {
                rule.responses = r.at("responses").get<std::vector<std::string>>();
            } else {
                rule.responses = {r.at("response").get<std::string>()};
            }
            c.rules.push_back(std::move(rule));
        }
    }
}

// ------------------------------------------------------------- mock helpers

std::vector<double> mock_text_embedding(const std::string& text, std::size_t dim) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    if (tokens.empty()) tokens.push_back(text);

    std::vector<double> v(dim, 0.0);
    for (const auto& tok : tokens) {
        std::uint64_t state = fnv1a64(tok);
        for (std::size_t i = 0; i < dim; ++i) {
            const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
            v[i] += 2.0 * u - 1.0;
        }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0) {
        for (double& x : v) x /= norm;
    }
    return v;
}

namespace {

std::string expand_template(const std::string& tpl, const std::string& digest) {
    static const std::regex placeholder(R"(\{\{(digest|digest_mod):(\d+)\}\})");
    std::string out;
    auto begin = std::sregex_iterator(tpl.begin(), tpl.end(), placeholder);
    std::size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        out.append(tpl, last, static_cast<std::size_t>(m.position()) - last);
        const auto n = std::stoull(m[2].str());
        if (m[1] == "digest") {
            out += digest.substr(0, std::min<std::size_t>(n, digest.size()));
        } else {
            const std::uint64_t prefix = std::stoull(digest.substr(0, 15), nullptr, 16);
            out += std::to_string(n == 0 ? 0 : prefix % n);
        }
        last = static_cast<std::size_t>(m.position() + m.length());
    }
    out.append(tpl, last, std::string::npos);
    return out;
}

std::int64_t estimate_tokens(const std::string& s) { return static_cast<std::int64_t>((s.size() + 3) / 4); }

// Nominal per-image cost used by the mock token estimate.
constexpr std::int64_t kMockImageTokens = 85;

std::string env_or_empty(const std::string& name) {
    if (name.empty()) return {};
    const char* v = std::getenv(name.c_str());
    return v ? std::string(v) : std::string{};
}

}  // namespace

// ------------------------------------------------------------ token bucket

TokenBucket::TokenBucket(double per_minute)
    : rate_per_second_(per_minute / 60.0),
      capacity_(std::max(1.0, per_minute / 60.0)),
      tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
    if (rate_per_second_ <= 0) return;
    std::unique_lock lock(mutex_);
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_second_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_second_);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

// ----------------------------------------------------------------- backend

struct Backend::HttpTarget {
    std::string scheme_host_port;
    std::string path_prefix;
};

Backend::Backend(BackendConfig cfg)
    : cfg_(std::move(cfg)), bucket_(cfg_.requests_per_minute), in_flight_(cfg_.max_in_flight) {
    cfg_.validate();
    if (cfg_.kind == BackendConfig::Kind::Http) {
        static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(cfg_.base_url, m, url)) throw ConfigError("malformed base_url '" + cfg_.base_url + "'");
        target_ = std::make_unique<HttpTarget>();
        target_->scheme_host_port = m[1].str();
        target_->path_prefix = m[2].matched ? m[2].str() : "";
        while (!target_->path_prefix.empty() && target_->path_prefix.back() == '/') target_->path_prefix.pop_back();
    }
    if (!cfg_.replay_ledger.empty()) {
        std::ifstream in(cfg_.replay_ledger);
        if (!in) throw ConfigError("replay ledger not found: " + cfg_.replay_ledger.string());
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            const auto j = nlohmann::json::parse(line);
            ledger_[j.at("digest").get<std::string>()] = j.at("response");
        }
    }
}

Backend::~Backend() = default;

BackendStats Backend::stats() const {
    return {transport_calls_.load(), cache_hits_.load(), retries_.load()};
}

std::optional<nlohmann::json> Backend::cache_load(const std::string& key) const {
    if (cfg_.cache_dir.empty()) return std::nullopt;
    const auto path = cfg_.cache_dir / (key + ".json");
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const std::exception&) {
        return std::nullopt;  // torn or foreign file: treat as a miss
    }
}

void Backend::cache_store(const std::string& key, const nlohmann::json& value) const {
    if (cfg_.cache_dir.empty()) return;
    write_file_atomic(cfg_.cache_dir / (key + ".json"), value.dump());
}

ChatResponse Backend::chat(const ChatRequest& request) {
    request.validate();
    const std::string digest = request.digest();
    if (auto hit = cache_load(digest)) {
        ++cache_hits_;
        ChatResponse r;
        r.text = hit->at("text").get<std::string>();
        r.prompt_tokens = hit->value("prompt_tokens", std::int64_t{0});
        r.completion_tokens = hit->value("completion_tokens", std::int64_t{0});
        r.from_cache = true;
        return r;
    }
    const auto start = std::chrono::steady_clock::now();
    ChatResponse r = cfg_.kind == BackendConfig::Kind::Mock ? mock_chat(request, digest) : http_chat(request);
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    cache_store(digest, {{"text", r.text}, {"prompt_tokens", r.prompt_tokens}, {"completion_tokens", r.completion_tokens}});
    return r;
}

ChatResponse Backend::mock_chat(const ChatRequest& request, const std::string& digest) {
    ++transport_calls_;
    ChatResponse r;
    std::int64_t prompt_tokens = estimate_tokens(request.system_text) + estimate_tokens(request.user_text()) +
                                 kMockImageTokens * static_cast<std::int64_t>(request.image_count());
    if (auto it = ledger_.find(digest); it != ledger_.end()) {
        const auto& resp = it->second;
        if (resp.is_string()) {
            r.text = resp.get<std::string>();
        } else {
            r.text = resp.at("text").get<std::string>();
            prompt_tokens = resp.value("prompt_tokens", prompt_tokens);
        }
        r.prompt_tokens = prompt_tokens;
        r.completion_tokens = estimate_tokens(r.text);
        return r;
    }
    const std::string haystack = request.system_text + "\n" + request.user_text();
    for (const auto& rule : cfg_.rules) {
        if (!rule.model.empty() && rule.model != request.model_id) continue;
        if (haystack.find(rule.contains) == std::string::npos) continue;
        if (rule.responses.empty()) continue;
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(request.attempt, 0)),
                                               rule.responses.size() - 1);
        r.text = expand_template(rule.responses[idx], digest);
        r.prompt_tokens = prompt_tokens;
        r.completion_tokens = estimate_tokens(r.text);
        return r;
    }
    throw ReplayMissError("mock backend has no ledger entry or rule for request " + digest.substr(0, 12));
}

std::string Backend::http_post(const std::string& path, const std::string& body) {
    httplib::Client client(target_->scheme_host_port);
    client.set_connection_timeout(std::chrono::seconds(std::min(cfg_.timeout_seconds, 30)));
    client.set_read_timeout(std::chrono::seconds(cfg_.timeout_seconds));
    client.set_write_timeout(std::chrono::seconds(cfg_.timeout_seconds));
    httplib::Headers headers;
    if (const auto key = env_or_empty(cfg_.api_key_env_var); !key.empty()) {
        headers.emplace("Authorization", "Bearer " + key);
    }
    const std::string full_path = target_->path_prefix + path;

    std::string last_error;
    for (int attempt = 0; attempt < cfg_.retry_limit; ++attempt) {
        if (attempt > 0) {
            ++retries_;
            std::this_thread::sleep_for(cfg_.retry_backoff * (1 << std::min(attempt - 1, 6)));
        }
        bucket_.acquire();
        in_flight_.acquire();
        ++transport_calls_;
        auto res = client.Post(full_path, headers, body, "application/json");
        in_flight_.release();
        if (!res) {
            last_error = "network failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) return res->body;
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
            continue;
        }
        throw RequestError(res->status, res->body);
    }
    throw TransportError("POST " + target_->scheme_host_port + full_path + " failed after " +
                         std::to_string(cfg_.retry_limit) + " attempts (" + last_error + ")");
}

ChatResponse Backend::http_chat(const ChatRequest& request) {
    const std::string body = http_post("/chat/completions", request.wire_payload().dump());
    ChatResponse r;
    try {
        const auto j = nlohmann::json::parse(body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) {
            r.text = content.get<std::string>();
        } else if (content.is_array()) {
            for (const auto& part : content) {
                if (part.value("type", "") == "text") r.text += part.value("text", "");
            }
        }
        if (j.contains("usage")) {
            r.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
            r.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed chat completion response: ") + e.what());
    }
    return r;
}

std::vector<double> Backend::http_embed(const std::string& text) {
    const nlohmann::json payload = {{"model", cfg_.embedding_model}, {"input", text}};
    const std::string body = http_post("/embeddings", payload.dump());
    try {
        return nlohmann::json::parse(body).at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed embedding response: ") + e.what());
    }
}

std::vector<double> Backend::embed_text(const std::string& text) {
    if (text.empty()) throw PreconditionError("cannot embed empty text");
    const bool mock = cfg_.kind == BackendConfig::Kind::Mock;
    const std::string model = mock ? "mock-hash-" + std::to_string(cfg_.mock_embedding_dim) : cfg_.embedding_model;
    const std::string key = sha256_hex(nlohmann::json{{"embed", model}, {"input", text}}.dump());
    if (auto hit = cache_load(key)) {
        ++cache_hits_;
        return hit->at("vector").get<std::vector<double>>();
    }
    std::vector<double> v;
    if (mock) {
        ++transport_calls_;
        v = mock_text_embedding(text, cfg_.mock_embedding_dim);
    } else {
        v = http_embed(text);
    }
    cache_store(key, {{"vector", v}});
    return v;
}

nlohmann::json Backend::post_json(const std::string& path, const nlohmann::json& body) {
    if (!target_) throw ConfigError("post_json requires an http backend");
    const std::string text = http_post(path, body.dump());
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed JSON response: ") + e.what());
    }
}

}  // namespace rationalets
