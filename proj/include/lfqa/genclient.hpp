#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lfqa {

struct GenerationRequest {
    std::string prompt;
    std::size_t max_tokens = 256;
    double temperature = 0.0;
    std::size_t n_samples = 1;
    std::vector<std::string> stop_sequences;
    std::string metadata; // record id, for logs only

    /// Throws GenerationError(schema) when n_samples or max_tokens is zero or temperature is negative.
    void validate() const;
};

struct GenerationResult {
    std::vector<std::string> texts;
    std::string backend_id;
    std::chrono::milliseconds latency{0};
    std::vector<bool> truncated;
};

enum class BackendKind { http, scripted };

struct BackendConfig {
    BackendKind kind = BackendKind::scripted;
    std::string endpoint_url;
    std::string model_name;
    std::string auth_env; // name of the variable holding the bearer token; empty: no auth header
    std::chrono::milliseconds timeout{60'000};
    std::size_t max_retries = 3;
    std::size_t max_in_flight = 4;
    bool native_n = true;
    std::chrono::milliseconds backoff_base{500};
    std::filesystem::path fixture_dir; // scripted: replay source; http: when set, every result is recorded here

    /// Throws ConfigError if an http backend lacks endpoint_url or model_name, a scripted backend
    /// lacks fixture_dir, or max_in_flight is zero.
    void validate() const;
};

/// A text-generation backend. Implementations are safe to share across threads.
class TextGenerator {
public:
    virtual ~TextGenerator() = default;
    virtual GenerationResult generate(GenerationRequest const& request) = 0;
    virtual std::string id() const = 0;
};

/// Directory of fixtures named by the SHA-256 of the exact prompt text.
class FixtureStore {
public:
    explicit FixtureStore(std::filesystem::path dir);

    static std::string digest(std::string_view prompt);

    /// Throws GenerationError(fixture_conflict) when the digest already maps to different texts.
    void record(std::string const& prompt, std::vector<std::string> const& texts) const;
    std::optional<std::vector<std::string>> lookup(std::string const& prompt) const;
    std::filesystem::path path_for(std::string_view prompt) const;
    std::filesystem::path const& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
};

void record_fixture(FixtureStore const& store, std::string const& prompt, std::vector<std::string> const& texts);

/// Replays recorded texts: the first n_samples entries of the prompt's fixture, in order.
class ScriptedGenerator final : public TextGenerator {
public:
    explicit ScriptedGenerator(std::filesystem::path fixture_dir);

    GenerationResult generate(GenerationRequest const& request) override;
    std::string id() const override;

private:
    FixtureStore store_;
};

/// Counting gate bounding the number of requests outstanding at once.
class InFlightLimiter {
public:
    explicit InFlightLimiter(std::size_t limit) : limit_(limit) { }

    class Permit {
    public:
        explicit Permit(InFlightLimiter& l) : limiter_(&l) { limiter_->acquire(); }
        Permit(Permit const&) = delete;
        Permit& operator=(Permit const&) = delete;
        ~Permit() { limiter_->release(); }

    private:
        InFlightLimiter* limiter_;
    };

    std::size_t peak() const;

private:
    void acquire();
    void release();

    std::size_t limit_;
    std::size_t active_ = 0;
    std::size_t peak_ = 0;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
};

/// Client for chat-completion style endpoints: POST {model, messages, temperature, n, max_tokens,
/// stop} with a bearer token read from the environment variable named by auth_env.
///
/// Transport failures, timeouts, 408, 429 and 5xx responses are retried up to max_retries times
/// with exponential backoff (backoff_base * 2^attempt). Authentication failures, other 4xx and
/// malformed responses are not retried. When native_n is set the server's `n` parameter is used and
/// any shortfall is filled with single-sample requests; otherwise n independent requests are sent.
class HttpGenerator final : public TextGenerator {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit HttpGenerator(BackendConfig config, Sleeper sleeper = {});

    GenerationResult generate(GenerationRequest const& request) override;
    std::string id() const override;

    std::size_t peak_in_flight() const { return limiter_.peak(); }

private:
    struct Choices {
        std::vector<std::string> texts;
        std::vector<bool> truncated;
    };

    Choices request_once(GenerationRequest const& request, std::size_t n, std::string const& token);
    Choices request_with_retries(GenerationRequest const& request, std::size_t n, std::string const& token);

    BackendConfig config_;
    Sleeper sleeper_;
    std::string scheme_host_port_;
    std::string path_;
    InFlightLimiter limiter_;
};

/// Forwards to `inner` and stores every result in `store` for later scripted replay.
class RecordingGenerator final : public TextGenerator {
public:
    RecordingGenerator(std::shared_ptr<TextGenerator> inner, std::filesystem::path fixture_dir);

    GenerationResult generate(GenerationRequest const& request) override;
    std::string id() const override;

private:
    std::shared_ptr<TextGenerator> inner_;
    FixtureStore store_;
};

std::shared_ptr<TextGenerator> make_generator(BackendConfig const& config);

/// One-shot convenience over make_generator().
GenerationResult generate(BackendConfig const& config, GenerationRequest const& request);

} // namespace lfqa
