#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include <nlohmann/json.hpp>

#include "lfqa/error.hpp"
#include "lfqa/genclient.hpp"

using namespace lfqa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir()
    {
        path = fs::temp_directory_path() / ("lfqa_gen_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// In-process chat-completion server; the handler decides each response.
struct FakeServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> calls{0};
    std::atomic<int> active{0};
    std::atomic<int> peak{0};

    explicit FakeServer(std::function<void(httplib::Request const&, httplib::Response&, int)> handler)
    {
        server.Post("/v1/chat/completions", [this, handler](httplib::Request const& req, httplib::Response& res) {
            int const now = ++active;
            for (int p = peak.load(); now > p && !peak.compare_exchange_weak(p, now);) { }
            handler(req, res, calls++);
            --active;
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FakeServer()
    {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

json reply(std::vector<std::string> const& texts)
{
    json choices = json::array();
    for (std::size_t i = 0; i < texts.size(); ++i)
        choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", texts[i]}}}, {"finish_reason", "stop"}});
    return {{"choices", choices}};
}

BackendConfig http_config(std::string const& url, std::string auth_env = {})
{
    BackendConfig c;
    c.kind = BackendKind::http;
    c.endpoint_url = url;
    c.model_name = "test-model";
    c.auth_env = std::move(auth_env);
    c.timeout = std::chrono::milliseconds(5000);
    c.max_retries = 3;
    c.backoff_base = std::chrono::milliseconds(10);
    return c;
}

GenerationRequest request(std::string prompt, std::size_t n = 1)
{
    GenerationRequest r;
    r.prompt = std::move(prompt);
    r.n_samples = n;
    r.temperature = 0.7;
    r.max_tokens = 64;
    return r;
}

} // namespace

TEST_CASE("scripted playback")
{
    TempDir dir;
    FixtureStore store(dir.path);
    record_fixture(store, "p", {"ok"});
    record_fixture(store, "three", {"a", "b", "c"});
    ScriptedGenerator gen(dir.path);
    CHECK(gen.generate(request("p")).texts == std::vector<std::string>{"ok"});
    CHECK(gen.generate(request("three", 3)).texts == std::vector<std::string>{"a", "b", "c"});
    CHECK(gen.generate(request("three", 2)).texts == std::vector<std::string>{"a", "b"});

    try {
        gen.generate(request("three", 4));
        FAIL("expected a shortfall error");
    } catch (GenerationError const& e) {
        CHECK(e.kind() == GenerationError::Kind::fixture_missing);
    }
    try {
        gen.generate(request("unknown"));
        FAIL("expected a missing fixture");
    } catch (GenerationError const& e) {
        CHECK(e.kind() == GenerationError::Kind::fixture_missing);
    }
}

TEST_CASE("fixture recording: idempotent, conflicting, independent")
{
    TempDir dir;
    FixtureStore store(dir.path);
    record_fixture(store, "p", {"a"});
    CHECK_NOTHROW(record_fixture(store, "p", {"a"}));
    try {
        record_fixture(store, "p", {"b"});
        FAIL("expected a conflict");
    } catch (GenerationError const& e) {
        CHECK(e.kind() == GenerationError::Kind::fixture_conflict);
    }
    record_fixture(store, "q", {"z"});
    CHECK(*store.lookup("p") == std::vector<std::string>{"a"});
    CHECK(*store.lookup("q") == std::vector<std::string>{"z"});
    CHECK(!store.lookup("p "));
    CHECK(FixtureStore::digest("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK_THROWS_AS(record_fixture(store, "r", {}), GenerationError);
}

TEST_CASE("scripted backend is deterministic")
{
    TempDir dir;
    record_fixture(FixtureStore(dir.path), "p", {"x", "y"});
    BackendConfig c;
    c.fixture_dir = dir.path;
    auto const a = generate(c, request("p", 2));
    auto const b = generate(c, request("p", 2));
    CHECK(a.texts == b.texts);
}

TEST_CASE("request validation")
{
    TempDir dir;
    ScriptedGenerator gen(dir.path);
    auto r = request("p");
    r.n_samples = 0;
    CHECK_THROWS_AS(gen.generate(r), GenerationError);
    r = request("p");
    r.max_tokens = 0;
    CHECK_THROWS_AS(gen.generate(r), GenerationError);
    BackendConfig c;
    c.kind = BackendKind::http;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = BackendConfig{};
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("http request shape and bearer token")
{
    json seen;
    std::string auth;
    FakeServer srv([&](httplib::Request const& req, httplib::Response& res, int) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(reply({"one", "two"}).dump(), "application/json");
    });
    ::setenv("LFQA_TEST_TOKEN", "sekrit-123", 1);
    HttpGenerator gen(http_config(srv.url(), "LFQA_TEST_TOKEN"));
    auto req = request("hello", 2);
    req.stop_sequences = {"###"};
    auto const out = gen.generate(req);
    CHECK(out.texts == std::vector<std::string>{"one", "two"});
    CHECK(out.truncated == std::vector<bool>{false, false});
    CHECK(seen["model"] == "test-model");
    CHECK(seen["messages"][0]["role"] == "user");
    CHECK(seen["messages"][0]["content"] == "hello");
    CHECK(seen["n"] == 2);
    CHECK(seen["max_tokens"] == 64);
    CHECK(seen["temperature"] == 0.7);
    CHECK(seen["stop"][0] == "###");
    CHECK(auth == "Bearer sekrit-123");
    ::unsetenv("LFQA_TEST_TOKEN");
}

TEST_CASE("choices are ordered by index, not arrival")
{
    FakeServer srv([](httplib::Request const&, httplib::Response& res, int) {
        json r{{"choices",
                {{{"index", 1}, {"message", {{"content", "second"}}}}, {{"index", 0}, {"message", {{"content", "first"}}}}}}};
        res.set_content(r.dump(), "application/json");
    });
    HttpGenerator gen(http_config(srv.url()));
    CHECK(gen.generate(request("p", 2)).texts == std::vector<std::string>{"first", "second"});
}

TEST_CASE("transient failures are retried with exponential backoff")
{
    FakeServer srv([](httplib::Request const&, httplib::Response& res, int call) {
        if (call < 2) {
            res.status = call == 0 ? 503 : 429;
            res.set_content("busy", "text/plain");
        } else {
            res.set_content(reply({"fine"}).dump(), "application/json");
        }
    });
    std::vector<long long> sleeps;
    HttpGenerator gen(http_config(srv.url()), [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
    CHECK(gen.generate(request("p")).texts == std::vector<std::string>{"fine"});
    CHECK(srv.calls == 3);
    CHECK(sleeps == std::vector<long long>{10, 20});
}

TEST_CASE("retries are bounded")
{
    FakeServer srv([](httplib::Request const&, httplib::Response& res, int) { res.status = 500; });
    auto cfg = http_config(srv.url());
    cfg.max_retries = 2;
    HttpGenerator gen(cfg, [](std::chrono::milliseconds) {});
    try {
        gen.generate(request("p"));
        FAIL("expected failure");
    } catch (GenerationError const& e) {
        CHECK(e.kind() == GenerationError::Kind::transport);
    }
    CHECK(srv.calls == 3);
}

TEST_CASE("authentication and schema errors are not retried")
{
    ::setenv("LFQA_TEST_TOKEN", "sekrit-456", 1);
    SUBCASE("401")
    {
        FakeServer srv([](httplib::Request const& req, httplib::Response& res, int) {
            res.status = 401;
            res.set_content("bad token " + req.get_header_value("Authorization"), "text/plain");
        });
        HttpGenerator gen(http_config(srv.url(), "LFQA_TEST_TOKEN"), [](std::chrono::milliseconds) {});
        try {
            gen.generate(request("p"));
            FAIL("expected failure");
        } catch (GenerationError const& e) {
            CHECK(e.kind() == GenerationError::Kind::authentication);
            CHECK(std::string(e.what()).find("sekrit-456") == std::string::npos);
        }
        CHECK(srv.calls == 1);
    }
    SUBCASE("400 echoing the token")
    {
        FakeServer srv([](httplib::Request const& req, httplib::Response& res, int) {
            res.status = 400;
            res.set_content("rejected " + req.get_header_value("Authorization"), "text/plain");
        });
        HttpGenerator gen(http_config(srv.url(), "LFQA_TEST_TOKEN"), [](std::chrono::milliseconds) {});
        try {
            gen.generate(request("p"));
            FAIL("expected failure");
        } catch (GenerationError const& e) {
            CHECK(e.kind() == GenerationError::Kind::rejected);
            CHECK(std::string(e.what()).find("sekrit-456") == std::string::npos);
        }
        CHECK(srv.calls == 1);
    }
    SUBCASE("malformed body")
    {
        FakeServer srv([](httplib::Request const&, httplib::Response& res, int) {
            res.set_content(R"({"choices": [{"text": "legacy"}]})", "application/json");
        });
        HttpGenerator gen(http_config(srv.url()), [](std::chrono::milliseconds) {});
        try {
            gen.generate(request("p"));
            FAIL("expected failure");
        } catch (GenerationError const& e) {
            CHECK(e.kind() == GenerationError::Kind::schema);
        }
        CHECK(srv.calls == 1);
    }
    ::unsetenv("LFQA_TEST_TOKEN");
}

TEST_CASE("missing credential fails before any network call")
{
    FakeServer srv([](httplib::Request const&, httplib::Response& res, int) {
        res.set_content(reply({"x"}).dump(), "application/json");
    });
    ::unsetenv("LFQA_ABSENT_TOKEN");
    HttpGenerator gen(http_config(srv.url(), "LFQA_ABSENT_TOKEN"));
    try {
        gen.generate(request("p"));
        FAIL("expected failure");
    } catch (GenerationError const& e) {
        CHECK(e.kind() == GenerationError::Kind::credential);
        CHECK(std::string(e.what()).find("LFQA_ABSENT_TOKEN") != std::string::npos);
    }
    CHECK(srv.calls == 0);
}

TEST_CASE("unreachable server is a transport error after retries")
{
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    auto cfg = http_config("http://127.0.0.1:" + std::to_string(port));
    cfg.max_retries = 1;
    cfg.timeout = std::chrono::milliseconds(300);
    int sleeps = 0;
    HttpGenerator gen(cfg, [&](std::chrono::milliseconds) { ++sleeps; });
    CHECK_THROWS_AS(gen.generate(request("p")), GenerationError);
    CHECK(sleeps == 1);
}

TEST_CASE("without native n, samples fan out under the in-flight bound")
{
    FakeServer srv([](httplib::Request const& req, httplib::Response& res, int call) {
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        auto const body = json::parse(req.body);
        CHECK(body["n"] == 1);
        res.set_content(reply({"s" + std::to_string(call)}).dump(), "application/json");
    });
    auto cfg = http_config(srv.url());
    cfg.native_n = false;
    cfg.max_in_flight = 2;
    HttpGenerator gen(cfg);
    auto const out = gen.generate(request("p", 6));
    CHECK(out.texts.size() == 6);
    CHECK(srv.calls == 6);
    CHECK(gen.peak_in_flight() <= 2);
    CHECK(srv.peak <= 2);
}

TEST_CASE("native n shortfall is topped up with single requests")
{
    FakeServer srv([](httplib::Request const& req, httplib::Response& res, int) {
        auto const n = json::parse(req.body)["n"].get<int>();
        if (n > 1) res.set_content(reply({"a", "b"}).dump(), "application/json");
        else res.set_content(reply({"extra"}).dump(), "application/json");
    });
    HttpGenerator gen(http_config(srv.url()));
    auto const out = gen.generate(request("p", 4));
    CHECK(out.texts == std::vector<std::string>{"a", "b", "extra", "extra"});
}

TEST_CASE("recording generator stores fixtures for replay")
{
    TempDir dir;
    FakeServer srv([](httplib::Request const&, httplib::Response& res, int) {
        res.set_content(reply({"live"}).dump(), "application/json");
    });
    auto cfg = http_config(srv.url());
    cfg.fixture_dir = dir.path;
    auto gen = make_generator(cfg);
    CHECK(gen->generate(request("p")).texts == std::vector<std::string>{"live"});
    CHECK(ScriptedGenerator(dir.path).generate(request("p")).texts == std::vector<std::string>{"live"});
}
