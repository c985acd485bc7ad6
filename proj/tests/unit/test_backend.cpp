#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "fixtures.hpp"
#include "rationalets/backend.hpp"
#include "rationalets/encoder.hpp"
#include "rationalets/error.hpp"
#include "rationalets/util.hpp"

using namespace rationalets;
using nlohmann::json;

namespace {

ChatRequest wire_request() {
    ChatRequest r;
    r.model_id = "gpt-4o-mini";
    r.system_text = "You are terse.";
    r.user_parts = {ContentPart::text("Describe the chart."), ContentPart::image("data:image/png;base64,iVBORw0KGgo=")};
    r.temperature = 0.0;
    r.max_tokens = 64;
    return r;
}

BackendConfig mock_with(std::vector<MockRule> rules) {
    BackendConfig c;
    c.rules = std::move(rules);
    return c;
}

// Local OpenAI-compatible stand-in. `fail_first` requests get `fail_status`.
class FakeServer {
public:
    FakeServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_body = req.body;
            last_auth = req.get_header_value("Authorization");
            if (respond_failure(res)) return;
            res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "pong"}}}}}},
                                 {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
                                .dump(),
                            "application/json");
        });
        server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            last_body = req.body;
            if (respond_failure(res)) return;
            res.set_content(json{{"data", {{{"embedding", {3.0, 4.0}}}}}}.dump(), "application/json");
        });
        server_.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
            last_body = req.body;
            if (respond_failure(res)) return;
            const auto body = json::parse(req.body);
            if (!body.contains("matrix") || !body.contains("columns")) {
                res.status = 400;
                res.set_content(R"({"error":"matrix and columns are required"})", "application/json");
                return;
            }
            res.set_content(json{{"vector", embed_vector}, {"dim", embed_dim}, {"encoder_id", "ts2vec-test"}}.dump(),
                            "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    BackendConfig config() const {
        BackendConfig c;
        c.kind = BackendConfig::Kind::Http;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
        c.retry_backoff = std::chrono::milliseconds(1);
        c.api_key_env_var = "RATIONALETS_TEST_KEY";
        return c;
    }

    std::atomic<int> fail_first{0};
    int fail_status = 500;
    std::atomic<int> requests{0};
    std::string last_body;
    std::string last_auth;
    std::vector<double> embed_vector{0.0, 2.0, 0.0};
    std::size_t embed_dim = 3;

private:
    bool respond_failure(httplib::Response& res) {
        ++requests;
        if (fail_first > 0) {
            --fail_first;
            res.status = fail_status;
            res.set_content(R"({"error":"try later"})", "application/json");
            return true;
        }
        return false;
    }

    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST(ChatRequest, WirePayloadMatchesGolden) {
    EXPECT_EQ(wire_request().wire_payload().dump(), trim(fixtures::read_golden("chat_wire.json")));
}

TEST(ChatRequest, AttemptChangesDigestButNotWire) {
    auto a = wire_request();
    auto b = a;
    b.attempt = 1;
    EXPECT_EQ(a.wire_payload(), b.wire_payload());
    EXPECT_NE(a.digest(), b.digest());
    EXPECT_EQ(a.digest(), wire_request().digest());
    b = a;
    b.user_parts[1].value = "data:image/png;base64,iVBORw0KGgp=";
    EXPECT_NE(a.digest(), b.digest());
}

TEST(ChatRequest, ValidateRejectsMissingPieces) {
    auto r = wire_request();
    r.model_id.clear();
    EXPECT_THROW(r.validate(), PreconditionError);
    r = wire_request();
    r.user_parts.clear();
    EXPECT_THROW(r.validate(), PreconditionError);
    r = wire_request();
    r.max_tokens = 0;
    EXPECT_THROW(r.validate(), PreconditionError);
}

TEST(MockBackend, FirstMatchingRuleWins) {
    Backend b(mock_with({{"nothing here", "", {"no"}}, {"Describe", "", {"first"}}, {"chart", "", {"second"}}}));
    const auto r = b.chat(wire_request());
    EXPECT_EQ(r.text, "first");
    // ceil(14/4) + ceil(19/4) + one image
    EXPECT_EQ(r.prompt_tokens, 4 + 5 + 85);
    EXPECT_EQ(r.completion_tokens, 2);
}

TEST(MockBackend, ModelFilterAndAttemptIndex) {
    Backend b(mock_with({{"Describe", "gpt-5", {"big"}}, {"Describe", "", {"a0", "a1"}}}));
    auto req = wire_request();
    EXPECT_EQ(b.chat(req).text, "a0");
    req.attempt = 1;
    EXPECT_EQ(b.chat(req).text, "a1");
    req.attempt = 5;
    EXPECT_EQ(b.chat(req).text, "a1");
    req.model_id = "gpt-5";
    EXPECT_EQ(b.chat(req).text, "big");
}

TEST(MockBackend, DigestTemplates) {
    Backend b(mock_with({{"Describe", "", {"{{digest:8}}|{{digest_mod:3}}"}}}));
    const auto req = wire_request();
    const auto d = req.digest();
    const auto expected_mod = std::stoull(d.substr(0, 15), nullptr, 16) % 3;
    EXPECT_EQ(b.chat(req).text, d.substr(0, 8) + "|" + std::to_string(expected_mod));
}

TEST(MockBackend, NoRuleIsReplayMiss) {
    Backend b(mock_with({{"absent", "", {"x"}}}));
    EXPECT_THROW(b.chat(wire_request()), ReplayMissError);
}

TEST(MockBackend, LedgerTakesPrecedence) {
    const auto dir = fixtures::scratch_dir("ledger");
    const auto req = wire_request();
    write_file_atomic(dir / "ledger.jsonl", json{{"digest", req.digest()}, {"response", "from ledger"}}.dump() + "\n");
    auto cfg = mock_with({{"Describe", "", {"from rule"}}});
    cfg.replay_ledger = dir / "ledger.jsonl";
    Backend b(cfg);
    EXPECT_EQ(b.chat(req).text, "from ledger");
}

TEST(MockBackend, CacheServesRepeatRequests) {
    const auto dir = fixtures::scratch_dir("cache");
    auto cfg = mock_with({{"Describe", "", {"{{digest:6}}"}}});
    cfg.cache_dir = dir;
    {
        Backend b(cfg);
        const auto first = b.chat(wire_request());
        const auto second = b.chat(wire_request());
        EXPECT_FALSE(first.from_cache);
        EXPECT_TRUE(second.from_cache);
        EXPECT_EQ(first.text, second.text);
        EXPECT_EQ(b.stats().transport_calls, 1u);
        EXPECT_EQ(b.stats().cache_hits, 1u);
    }
    cfg.rules.clear();  // a fresh backend with no rules still answers from disk
    Backend again(cfg);
    EXPECT_TRUE(again.chat(wire_request()).from_cache);
}

TEST(MockBackend, EmbeddingIsDeterministicUnitNorm) {
    Backend b(BackendConfig{});
    const auto v = b.embed_text("Occupancy climbs");
    ASSERT_EQ(v.size(), 256u);
    double ss = 0;
    for (double x : v) ss += x * x;
    EXPECT_NEAR(ss, 1.0, 1e-12);
    EXPECT_EQ(v, mock_text_embedding("occupancy CLIMBS!", 256));
    EXPECT_NE(v, b.embed_text("Occupancy falls"));
    EXPECT_THROW(b.embed_text(""), PreconditionError);
}

TEST(BackendConfig, JsonRoundTripAndValidation) {
    BackendConfig c;
    c.kind = BackendConfig::Kind::Http;
    c.base_url = "https://example.invalid/v1";
    c.retry_limit = 5;
    c.rules = {{"a", "m", {"x", "y"}}};
    json j = c;
    const auto back = j.get<BackendConfig>();
    EXPECT_EQ(back.base_url, c.base_url);
    EXPECT_EQ(back.retry_limit, 5);
    ASSERT_EQ(back.rules.size(), 1u);
    EXPECT_EQ(back.rules[0].responses, (std::vector<std::string>{"x", "y"}));
    c.retry_limit = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(HttpBackend, ChatSendsWirePayloadAndReadsUsage) {
    FakeServer server;
    ::setenv("RATIONALETS_TEST_KEY", "sk-test", 1);
    Backend b(server.config());
    const auto r = b.chat(wire_request());
    EXPECT_EQ(r.text, "pong");
    EXPECT_EQ(r.prompt_tokens, 11);
    EXPECT_EQ(r.completion_tokens, 3);
    EXPECT_EQ(json::parse(server.last_body), wire_request().wire_payload());
    EXPECT_EQ(server.last_auth, "Bearer sk-test");
    ::unsetenv("RATIONALETS_TEST_KEY");
}

TEST(HttpBackend, RetriesRateLimitAndServerErrors) {
    FakeServer server;
    server.fail_first = 2;
    server.fail_status = 429;
    Backend b(server.config());
    EXPECT_EQ(b.chat(wire_request()).text, "pong");
    EXPECT_EQ(server.requests.load(), 3);
    EXPECT_EQ(b.stats().retries, 2u);

    server.fail_first = 3;
    server.fail_status = 503;
    EXPECT_THROW(b.embed_text("x"), TransportError);
}

TEST(HttpBackend, ClientErrorIsNotRetried) {
    FakeServer server;
    server.fail_first = 1;
    server.fail_status = 400;
    Backend b(server.config());
    try {
        b.chat(wire_request());
        FAIL() << "expected RequestError";
    } catch (const RequestError& e) {
        EXPECT_EQ(e.status(), 400);
    }
    EXPECT_EQ(server.requests.load(), 1);
}

TEST(HttpBackend, EmbeddingsEndpoint) {
    FakeServer server;
    Backend b(server.config());
    EXPECT_EQ(b.embed_text("hello"), (std::vector<double>{3.0, 4.0}));
    const auto body = json::parse(server.last_body);
    EXPECT_EQ(body.at("model"), "text-embedding-3-large");
    EXPECT_EQ(body.at("input"), "hello");
    const auto e = encode_text("hello", b);
    EXPECT_EQ(e.values, (std::vector<double>{0.6, 0.8}));
    EXPECT_EQ(e.encoder_id, "text-embedding-3-large");
}

TEST(HttpBackend, UnreachableHostIsTransportError) {
    auto cfg = FakeServer().config();  // server gone once the temporary dies
    cfg.retry_limit = 2;
    Backend b(cfg);
    EXPECT_THROW(b.chat(wire_request()), TransportError);
}

TEST(RemoteEncoder, PostsMatrixAndColumns) {
    FakeServer server;
    Backend b(server.config());
    const auto table = tabularize(fixtures::tiny_traffic_sample());
    const auto e = encode_temporal(table, TemporalEncoderKind::RemoteService, &b);
    const auto body = json::parse(server.last_body);
    EXPECT_EQ(body.at("columns"), (std::vector<std::string>{"Intensity", "Occupancy"}));
    EXPECT_EQ(body.at("matrix"), json::parse("[[812.0,12.5],[790.5,13.75],[805.0,11.0]]"));
    EXPECT_EQ(e.values, (std::vector<double>{0.0, 1.0, 0.0}));
    EXPECT_EQ(e.encoder_id, "ts2vec-test");
    EXPECT_EQ(e.space, EmbeddingSpace::Temporal);
}

TEST(RemoteEncoder, DimMismatchIsShapeError) {
    FakeServer server;
    server.embed_dim = 4;
    Backend b(server.config());
    EXPECT_THROW(encode_temporal(tabularize(fixtures::tiny_traffic_sample()), TemporalEncoderKind::RemoteService, &b),
                 ShapeError);
}

TEST(RemoteEncoder, NeedsABackend) {
    EXPECT_THROW(encode_temporal(tabularize(fixtures::tiny_traffic_sample()), TemporalEncoderKind::RemoteService),
                 ConfigError);
}
