#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "lfqa/error.hpp"
#include "lfqa/feedback.hpp"
#include "lfqa/segment.hpp"

using namespace lfqa;
using CT = CompletenessTag;
namespace fs = std::filesystem;

namespace {

FeedbackSample sample(std::vector<CT> tags, std::map<std::size_t, std::string> reasons = {})
{
    FeedbackSample s;
    s.tags = std::move(tags);
    s.reasons = std::move(reasons);
    s.parse_ok = true;
    return s;
}

// score_i = |{s : t_s = t_i}| / n, straight from the definition.
std::vector<double> tc_oracle(std::vector<FeedbackSample> const& v)
{
    std::vector<double> out;
    for (auto const& a : v) {
        int same = 0;
        for (auto const& b : v) {
            bool eq = a.tags.size() == b.tags.size();
            for (std::size_t k = 0; eq && k < a.tags.size(); ++k) eq = a.tags[k] == b.tags[k];
            same += eq ? 1 : 0;
        }
        out.push_back(static_cast<double>(same) / static_cast<double>(v.size()));
    }
    return out;
}

std::vector<std::string> tokens_oracle(FeedbackSample const& s)
{
    std::vector<std::string> out;
    for (auto const& [_, text] : s.reasons) {
        std::string cur;
        for (char ch : text + " ") {
            auto c = static_cast<unsigned char>(ch);
            if (std::isalnum(c) || c >= 0x80) {
                cur += static_cast<char>(std::tolower(c));
            } else if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        }
    }
    return out;
}

std::vector<double> rc_oracle(std::vector<FeedbackSample> const& v)
{
    std::size_t const n = v.size();
    if (n == 1) return {1.0};
    std::vector<std::vector<std::string>> toks;
    for (auto const& s : v) toks.push_back(tokens_oracle(s));
    bool none = true;
    for (auto const& t : toks) none = none && t.empty();
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (toks[i].empty()) {
            out.push_back(none ? 1.0 : 0.0);
            continue;
        }
        double hits = 0;
        for (auto const& w : toks[i])
            for (std::size_t s = 0; s < n; ++s) {
                if (s == i) continue;
                bool found = false;
                for (auto const& x : toks[s]) found = found || x == w;
                hits += found ? 1 : 0;
            }
        out.push_back(hits / static_cast<double>(toks[i].size() * (n - 1)));
    }
    return out;
}

std::set<std::size_t> argmax(std::vector<double> const& v)
{
    std::set<std::size_t> out;
    double const best = *std::max_element(v.begin(), v.end());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] == best) out.insert(i);
    return out;
}

std::string random_reason(std::mt19937& rng)
{
    static std::vector<std::string> const words{"drainage", "erosion", "cost", "Ballast", "weight", "the", "missing",
                                                "detail", "x1", "émigré"};
    std::string r;
    int const k = std::uniform_int_distribution<int>(1, 5)(rng);
    for (int i = 0; i < k; ++i) {
        if (i) r += std::uniform_int_distribution<int>(0, 3)(rng) == 0 ? ", " : " ";
        r += words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
    }
    if (std::uniform_int_distribution<int>(0, 1)(rng)) r += ".";
    return r;
}

FeedbackSample random_sample(std::mt19937& rng, std::size_t n_sentences, double p_incomplete)
{
    FeedbackSample s;
    s.parse_ok = true;
    for (std::size_t i = 0; i < n_sentences; ++i) {
        bool inc = std::bernoulli_distribution(p_incomplete)(rng);
        s.tags.push_back(inc ? CT::incomplete : CT::complete);
        if (inc) s.reasons[i] = random_reason(rng);
    }
    return s;
}

} // namespace

TEST_CASE("feedback prompt layout")
{
    auto const p = build_feedback_prompt("Why?", {"A.", "B."});
    CHECK(p.rfind("### Instruction:\n", 0) == 0);
    CHECK(p.find("\n\n### Input:\nQuestion: Why?\nAnswer: 1. A.\n2. B.\n\n### Response:") != std::string::npos);
    CHECK(p.size() >= 14);
    CHECK(p.substr(p.size() - 13) == "### Response:");
    CHECK(build_feedback_prompt("Why?", {"Only."}).find("Answer: 1. Only.\n\n") != std::string::npos);
    CHECK(build_feedback_prompt("q", {"x"}) == build_feedback_prompt("q", {"x"}));
    CHECK_THROWS_AS(build_feedback_prompt("q", {}), Error);
    CHECK(build_feedback_prompt("q", {"line\nbreak"}).find("1. line break") != std::string::npos);
}

TEST_CASE("parse examples")
{
    auto const s = parse_feedback_output("1. [Complete]\n2. [Incomplete] Reasons: missing drainage detail.", 2);
    CHECK(s.parse_ok);
    CHECK(s.tags == std::vector<CT>{CT::complete, CT::incomplete});
    CHECK(s.reasons == std::map<std::size_t, std::string>{{1, "missing drainage detail."}});

    auto const short_ = parse_feedback_output("1. [Complete]", 2);
    CHECK(!short_.parse_ok);
    REQUIRE(!short_.diagnostics.empty());
    CHECK(short_.diagnostics[0] == "expected 2 tags, found 1");

    auto const multi = parse_feedback_output("1. [Incomplete] Reasons: a\nb\n2. [Complete]", 2);
    CHECK(multi.parse_ok);
    CHECK(multi.reasons.at(0) == "a\nb");
}

TEST_CASE("malformed outputs are rejected with diagnostics")
{
    std::vector<std::string> const bad{
        "",
        "Sure! Here you go:\n1. [Complete]\n2. [Complete]",
        "1. [Complete]\n3. [Complete]",
        "2. [Complete]\n1. [Complete]",
        "1. [Complete]\n2. [Maybe]",
        "1. [Complete]\n2. [Incomplete]",
        "1. [Complete]\n2. [Incomplete] Reasons:   ",
        "1. [Complete]\n2. [Complete]\n3. [Complete]",
        "no tags at all",
    };
    for (auto const& text : bad) {
        auto const s = parse_feedback_output(text, 2);
        CHECK_MESSAGE(!s.parse_ok, text);
        CHECK_MESSAGE(!s.diagnostics.empty(), text);
        CHECK(s.raw == text);
    }
}

TEST_CASE("format then parse is the identity")
{
    std::mt19937 rng(21);
    for (int iter = 0; iter < 1000; ++iter) {
        auto const n = std::uniform_int_distribution<std::size_t>(1, 9)(rng);
        auto s = random_sample(rng, n, 0.4);
        auto const text = format_feedback_output(s);
        auto back = parse_feedback_output(text, n);
        REQUIRE_MESSAGE(back.parse_ok, text);
        CHECK(back.tags == s.tags);
        CHECK(back.reasons == s.reasons);
    }
}

TEST_CASE("tag consistency examples")
{
    auto const a = sample({CT::complete, CT::incomplete}, {{1, "r"}});
    auto const b = sample({CT::complete, CT::complete});
    CHECK(tag_consistency({a, a, a}) == std::vector<double>{1.0, 1.0, 1.0});
    auto const tc = tag_consistency({a, a, b});
    CHECK(tc[0] == doctest::Approx(2.0 / 3));
    CHECK(tc[1] == doctest::Approx(2.0 / 3));
    CHECK(tc[2] == doctest::Approx(1.0 / 3));
    auto const c = sample({CT::incomplete, CT::complete}, {{0, "r"}});
    auto const d = sample({CT::incomplete, CT::incomplete}, {{0, "r"}, {1, "s"}});
    CHECK(tag_consistency({a, b, c, d}) == std::vector<double>(4, 0.25));
    CHECK_THROWS_AS(tag_consistency({}), Error);
    CHECK_THROWS_AS(tag_consistency({a, sample({CT::complete})}), Error);
}

TEST_CASE("reason consistency examples")
{
    std::vector<CT> const t{CT::incomplete};
    auto const same = sample(t, {{0, "misses the drainage"}});
    CHECK(reason_consistency({same, same, same}) == std::vector<double>{1.0, 1.0, 1.0});

    auto const rc = reason_consistency(
        {sample(t, {{0, "ballast drainage"}}), sample(t, {{0, "drainage helps"}}), sample(t, {{0, "cost"}})});
    CHECK(rc[0] == 0.25);
    CHECK(reason_consistency({sample(t, {{0, "alpha"}}), sample(t, {{0, "beta"}})}) == std::vector<double>{0.0, 0.0});
    CHECK(reason_consistency({same}) == std::vector<double>{1.0});

    auto const clean = sample({CT::complete});
    CHECK(reason_consistency({clean, clean}) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("consistency scores match brute force and argmax is variant-independent")
{
    std::mt19937 rng(99);
    for (int iter = 0; iter < 500; ++iter) {
        auto const n_sent = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
        auto const n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
        std::vector<FeedbackSample> v;
        for (std::size_t k = 0; k < n; ++k) v.push_back(random_sample(rng, n_sent, 0.3));

        auto const tc = tag_consistency(v);
        CHECK(tc == tc_oracle(v));
        CHECK(argmax(tc) == argmax(tag_consistency_excluding_self(v)));
        for (double x : tc) CHECK(x >= 1.0 / static_cast<double>(n));

        std::vector<FeedbackSample> survivors;
        for (auto i : argmax(tc)) survivors.push_back(v[i]);
        auto const rc = reason_consistency(survivors);
        auto const oracle = rc_oracle(survivors);
        REQUIRE(rc.size() == oracle.size());
        for (std::size_t i = 0; i < rc.size(); ++i) CHECK(rc[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
        if (survivors.size() > 1) CHECK(argmax(rc) == argmax(reason_consistency_self_inclusive(survivors)));

        auto const picked = select_feedback(v);
        CHECK(picked.s_tc == *std::max_element(tc.begin(), tc.end()));
        CHECK(picked.selected == v[picked.selected_index]);
        CHECK(select_feedback(v).selected_index == picked.selected_index);
    }
}

TEST_CASE("selection examples")
{
    auto const a = sample({CT::complete, CT::incomplete}, {{1, "misses drainage"}});
    auto const a2 = sample({CT::complete, CT::incomplete}, {{1, "misses drainage benefits"}});
    auto const b = sample({CT::complete, CT::complete});

    auto const one = select_feedback({a});
    CHECK(one.s_tc == 1.0);
    CHECK(one.s_rc == 1.0);
    CHECK(!one.low_confidence);

    auto const r = select_feedback({a, a2, b});
    CHECK(r.stage1_survivors == std::vector<std::size_t>{0, 1});
    CHECK(r.selected_index == 0); // "misses drainage" is fully covered by the other survivor
    CHECK(r.s_rc == 1.0);

    auto const lo = sample({CT::incomplete}, {{0, "one two three four five"}});
    auto const lo2 = sample({CT::incomplete}, {{0, "one two three other words"}});
    auto const low = select_feedback({lo, lo2});
    CHECK(low.s_rc == doctest::Approx(0.6));
    CHECK(low.low_confidence);

    auto broken = parse_feedback_output("junk", 2);
    auto const mixed = select_feedback({broken, b, broken});
    CHECK(mixed.n_sampled == 3);
    CHECK(mixed.n_parseable == 1);
    CHECK(mixed.selected_index == 1);
    CHECK_THROWS_AS(select_feedback({broken}), Error);
}

TEST_CASE("ties in stage 2 go to the lowest position")
{
    auto const x = sample({CT::incomplete}, {{0, "alpha"}});
    auto const y = sample({CT::incomplete}, {{0, "beta"}});
    auto const r = select_feedback({x, y});
    CHECK(r.selected_index == 0);
}

TEST_CASE("run_feedback over a scripted backend")
{
    auto const dir = fs::temp_directory_path() / "lfqa_feedback_test";
    fs::remove_all(dir);
    std::string const q = "Why do railways use ballast?";
    std::string const answer = "Ballast holds sleepers in place. It is cheap. It looks neat.";
    auto const sentences = sentence_texts(answer, segment_sentences(answer));
    REQUIRE(sentences.size() == 3);
    auto const prompt = build_feedback_prompt(q, sentences);

    std::vector<std::string> texts(20, "1. [Incomplete] Reasons: misses drainage and erosion control.\n2. [Complete]\n3. [Complete]");
    for (int i = 0; i < 5; ++i) texts[static_cast<std::size_t>(i) * 4] = "I cannot help with that.";
    record_fixture(FixtureStore(dir), prompt, texts);

    ScriptedGenerator gen(dir);
    FeedbackOptions opts;
    CHECK_THROWS_AS(run_feedback(q, answer, gen, opts), ConfigError);
    opts.temperature = 0.8;
    auto const r = run_feedback(q, answer, gen, opts, "rec");
    CHECK(r.n_sampled == 20);
    CHECK(r.n_parseable == 15);
    CHECK(r.s_tc == 1.0);
    CHECK(r.s_rc == 1.0);
    CHECK(r.selected.incomplete_indices() == std::vector<std::size_t>{0});
    CHECK(r.selected_index == 1);

    auto const j = to_json(r);
    CHECK(j["tags"] == nlohmann::json{"Incomplete", "Complete", "Complete"});
    CHECK(j["reasons"][0]["index"] == 0);
    auto const back = feedback_sample_from_json(j);
    CHECK(back.tags == r.selected.tags);
    CHECK(back.reasons == r.selected.reasons);
    fs::remove_all(dir);
}
