#include "lfqa/genclient.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <future>
#include <regex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "lfqa/error.hpp"

namespace lfqa {

using nlohmann::json;
using Kind = GenerationError::Kind;

namespace {

std::string hex(unsigned char const* data, std::size_t n)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(n * 2, '0');
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = digits[data[i] >> 4];
        out[2 * i + 1] = digits[data[i] & 0xF];
    }
    return out;
}

std::string read_file(std::filesystem::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Response bodies may echo request headers; never let the token through.
std::string scrub(std::string text, std::string const& secret)
{
    if (!secret.empty()) {
        for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos))
            text.replace(pos, secret.size(), "***");
    }
    if (text.size() > 200) text = text.substr(0, 200) + "...";
    return text;
}

} // namespace

void GenerationRequest::validate() const
{
    if (n_samples == 0) throw GenerationError(Kind::schema, "n_samples must be at least 1");
    if (max_tokens == 0) throw GenerationError(Kind::schema, "max_tokens must be at least 1");
    if (temperature < 0.0) throw GenerationError(Kind::schema, "temperature must be non-negative");
}

void BackendConfig::validate() const
{
    if (kind == BackendKind::http) {
        if (endpoint_url.empty()) throw ConfigError("http backend requires endpoint_url");
        if (model_name.empty()) throw ConfigError("http backend requires model_name");
    } else if (fixture_dir.empty()) {
        throw ConfigError("scripted backend requires fixture_dir");
    }
    if (max_in_flight == 0) throw ConfigError("max_in_flight must be at least 1");
}

// ---------------------------------------------------------------------------

FixtureStore::FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) { }

std::string FixtureStore::digest(std::string_view prompt)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(prompt.data(), prompt.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    return hex(md, len);
}

std::filesystem::path FixtureStore::path_for(std::string_view prompt) const
{
    return dir_ / (digest(prompt) + ".json");
}

std::optional<std::vector<std::string>> FixtureStore::lookup(std::string const& prompt) const
{
    auto const path = path_for(prompt);
    if (!std::filesystem::exists(path)) return std::nullopt;
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (json::exception const& e) {
        throw GenerationError(Kind::schema, "corrupt fixture " + path.string() + ": " + e.what());
    }
    if (!j.contains("texts") || !j["texts"].is_array())
        throw GenerationError(Kind::schema, "fixture " + path.string() + " lacks a 'texts' array");
    return j["texts"].get<std::vector<std::string>>();
}

void FixtureStore::record(std::string const& prompt, std::vector<std::string> const& texts) const
{
    if (texts.empty()) throw GenerationError(Kind::schema, "cannot record an empty fixture");
    if (auto existing = lookup(prompt)) {
        if (*existing == texts) return;
        throw GenerationError(Kind::fixture_conflict,
                              "fixture " + digest(prompt) + " already holds different texts");
    }
    std::filesystem::create_directories(dir_);
    auto const path = path_for(prompt);
    auto tmp = path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary);
        out << json{{"prompt", prompt}, {"texts", texts}}.dump(2) << '\n';
        if (!out) throw Error("cannot write fixture " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void record_fixture(FixtureStore const& store, std::string const& prompt, std::vector<std::string> const& texts)
{
    store.record(prompt, texts);
}

// ---------------------------------------------------------------------------

ScriptedGenerator::ScriptedGenerator(std::filesystem::path fixture_dir) : store_(std::move(fixture_dir)) { }

std::string ScriptedGenerator::id() const { return "scripted:" + store_.dir().string(); }

GenerationResult ScriptedGenerator::generate(GenerationRequest const& request)
{
    request.validate();
    auto texts = store_.lookup(request.prompt);
    if (!texts)
        throw GenerationError(Kind::fixture_missing, "no fixture for prompt digest " +
                                                         FixtureStore::digest(request.prompt) +
                                                         (request.metadata.empty() ? "" : " (" + request.metadata + ")"));
    if (texts->size() < request.n_samples)
        throw GenerationError(Kind::fixture_missing, "fixture " + FixtureStore::digest(request.prompt) + " holds " +
                                                         std::to_string(texts->size()) + " texts, " +
                                                         std::to_string(request.n_samples) + " requested");
    texts->resize(request.n_samples);
    GenerationResult result;
    result.truncated.assign(texts->size(), false);
    result.texts = std::move(*texts);
    result.backend_id = id();
    return result;
}

// ---------------------------------------------------------------------------

void InFlightLimiter::acquire()
{
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
    peak_ = std::max(peak_, active_);
}

void InFlightLimiter::release()
{
    {
        std::lock_guard lock(mutex_);
        --active_;
    }
    cv_.notify_one();
}

std::size_t InFlightLimiter::peak() const
{
    std::lock_guard lock(mutex_);
    return peak_;
}

// ---------------------------------------------------------------------------

HttpGenerator::HttpGenerator(BackendConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)), limiter_(std::max<std::size_t>(1, config_.max_in_flight))
{
    config_.validate();
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

    static std::regex const url_re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(config_.endpoint_url, m, url_re))
        throw ConfigError("endpoint_url must look like http(s)://host[:port][/path], got '" + config_.endpoint_url + "'");
    scheme_host_port_ = m[1].str();
    path_ = m[2].matched && m[2].str() != "/" ? m[2].str() : "/v1/chat/completions";
}

std::string HttpGenerator::id() const { return "http:" + config_.model_name + "@" + config_.endpoint_url; }

HttpGenerator::Choices HttpGenerator::request_once(GenerationRequest const& request, std::size_t n,
                                                   std::string const& token)
{
    json body{{"model", config_.model_name},
              {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens},
              {"n", n}};
    if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;

    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

    httplib::Client client(scheme_host_port_);
    auto const secs = config_.timeout.count() / 1000;
    auto const usecs = (config_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Result res;
    {
        InFlightLimiter::Permit permit(limiter_);
        res = client.Post(path_, headers, body.dump(), "application/json");
    }
    if (!res) throw GenerationError(Kind::transport, "transport failure: " + httplib::to_string(res.error()));

    auto const status = res->status;
    if (status == 401 || status == 403)
        throw GenerationError(Kind::authentication, "authentication failed (HTTP " + std::to_string(status) + ")");
    if (status == 408 || status == 429 || status >= 500)
        throw GenerationError(Kind::transport, "HTTP " + std::to_string(status) + ": " + scrub(res->body, token));
    if (status != 200)
        throw GenerationError(Kind::rejected, "HTTP " + std::to_string(status) + ": " + scrub(res->body, token));

    json reply;
    try {
        reply = json::parse(res->body);
    } catch (json::parse_error const&) {
        throw GenerationError(Kind::schema, "response is not JSON: " + scrub(res->body, token));
    }
    if (!reply.is_object() || !reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty())
        throw GenerationError(Kind::schema, "response lacks a non-empty 'choices' array");

    std::vector<std::pair<std::size_t, json>> choices;
    std::size_t position = 0;
    for (auto const& c : reply["choices"]) {
        std::size_t index = position++;
        if (c.contains("index") && c["index"].is_number_unsigned()) index = c["index"].get<std::size_t>();
        choices.emplace_back(index, c);
    }
    std::stable_sort(choices.begin(), choices.end(), [](auto const& a, auto const& b) { return a.first < b.first; });

    Choices out;
    for (auto const& [_, c] : choices) {
        if (!c.is_object() || !c.contains("message") || !c["message"].is_object() ||
            !c["message"].contains("content") || !c["message"]["content"].is_string())
            throw GenerationError(Kind::schema, "choice lacks message.content");
        out.texts.push_back(c["message"]["content"].get<std::string>());
        out.truncated.push_back(c.contains("finish_reason") && c["finish_reason"] == "length");
    }
    if (out.texts.size() > n) {
        out.texts.resize(n);
        out.truncated.resize(n);
    }
    return out;
}

HttpGenerator::Choices HttpGenerator::request_with_retries(GenerationRequest const& request, std::size_t n,
                                                           std::string const& token)
{
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            return request_once(request, n, token);
        } catch (GenerationError const& e) {
            if (!e.transient() || attempt >= config_.max_retries) throw;
            auto const delay = config_.backoff_base * (1LL << std::min<std::size_t>(attempt, 16));
            spdlog::warn("request {} attempt {} failed: {}; retrying in {} ms", request.metadata, attempt + 1, e.what(),
                         delay.count());
            sleeper_(delay);
        }
    }
}

GenerationResult HttpGenerator::generate(GenerationRequest const& request)
{
    request.validate();
    std::string token;
    if (!config_.auth_env.empty()) {
        char const* value = std::getenv(config_.auth_env.c_str());
        if (!value || !*value)
            throw GenerationError(Kind::credential, "credential environment variable " + config_.auth_env + " is not set");
        token = value;
    }

    auto const started = std::chrono::steady_clock::now();
    Choices all;
    if (config_.native_n) all = request_with_retries(request, request.n_samples, token);

    // Fill the remainder with single-sample requests; slot i always holds the i-th sample.
    std::size_t const have = all.texts.size();
    if (have < request.n_samples) {
        std::vector<std::future<Choices>> pending;
        for (std::size_t i = have; i < request.n_samples; ++i)
            pending.push_back(std::async(std::launch::async, [&] { return request_with_retries(request, 1, token); }));
        std::exception_ptr failure;
        for (auto& f : pending) {
            try {
                auto c = f.get();
                all.texts.push_back(std::move(c.texts.front()));
                all.truncated.push_back(c.truncated.front());
            } catch (...) {
                if (!failure) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);
    }

    GenerationResult result;
    result.texts = std::move(all.texts);
    result.truncated = std::move(all.truncated);
    result.backend_id = id();
    result.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    return result;
}

// ---------------------------------------------------------------------------

RecordingGenerator::RecordingGenerator(std::shared_ptr<TextGenerator> inner, std::filesystem::path fixture_dir)
    : inner_(std::move(inner)), store_(std::move(fixture_dir))
{ }

GenerationResult RecordingGenerator::generate(GenerationRequest const& request)
{
    auto result = inner_->generate(request);
    store_.record(request.prompt, result.texts);
    return result;
}

std::string RecordingGenerator::id() const { return inner_->id(); }

std::shared_ptr<TextGenerator> make_generator(BackendConfig const& config)
{
    config.validate();
    if (config.kind == BackendKind::scripted) return std::make_shared<ScriptedGenerator>(config.fixture_dir);
    auto http = std::make_shared<HttpGenerator>(config);
    if (!config.fixture_dir.empty()) return std::make_shared<RecordingGenerator>(http, config.fixture_dir);
    return http;
}

GenerationResult generate(BackendConfig const& config, GenerationRequest const& request)
{
    return make_generator(config)->generate(request);
}

} // namespace lfqa
