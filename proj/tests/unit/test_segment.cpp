#include <doctest.h>

#include <random>

#include "lfqa/segment.hpp"
#include "lfqa/utf8.hpp"

using namespace lfqa;

namespace {

std::vector<std::string> split(std::string const& text)
{
    return sentence_texts(text, segment_sentences(text));
}

} // namespace

TEST_CASE("empty and blank text have no sentences")
{
    CHECK(segment_sentences(std::string_view("")).empty());
    CHECK(segment_sentences(std::string_view("   \n\t ")).empty());
}

TEST_CASE("two plain sentences split at the first period")
{
    std::string const t = "A trademark protects a logo. A copyright protects content.";
    auto const spans = segment_sentences(t);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].start == 0);
    CHECK(spans[0].end == 28);
    CHECK(spans[1].start == 29);
    CHECK(spans[1].end == utf8::length(t));
    CHECK(spans[1].index == 1);
}

TEST_CASE("abbreviations and initials do not end a sentence")
{
    CHECK(split("Dr. Smith left. He returned.") == std::vector<std::string>{"Dr. Smith left.", "He returned."});
    CHECK(split("J. R. R. Tolkien wrote it. Many read it.").size() == 2);
    CHECK(split("It costs more, e.g. The big one. Fine.").size() == 2);
}

TEST_CASE("question marks, exclamations and closing quotes")
{
    CHECK(split("Why? Because. \"Really!\" Yes.") ==
          std::vector<std::string>{"Why?", "Because.", "\"Really!\"", "Yes."});
    CHECK(split("He said \"stop.\" Then he left.").size() == 2);
}

TEST_CASE("lowercase continuation and decimals stay together")
{
    CHECK(split("Pi is 3.14 roughly. ok then.").size() == 1);
    CHECK(split("Version 2.0 shipped. It works.").size() == 2);
}

TEST_CASE("URLs are not split")
{
    auto const s = split("See https://example.com/a.B.html for more. Then go.");
    REQUIRE(s.size() == 2);
    CHECK(s[0] == "See https://example.com/a.B.html for more.");
    auto const b = split("Sources (see www.test.org/x. Y) are fine. Next one.");
    CHECK(b.size() == 2);
}

TEST_CASE("find_urls trims trailing punctuation")
{
    auto const t = utf8::decode("Read https://a.org/x. Or (http://b.com/y).");
    auto const urls = find_urls(t);
    REQUIRE(urls.size() == 2);
    CHECK(utf8::encode(t.substr(urls[0].first, urls[0].second - urls[0].first)) == "https://a.org/x");
    CHECK(utf8::encode(t.substr(urls[1].first, urls[1].second - urls[1].first)) == "http://b.com/y");
}

TEST_CASE("blank lines separate sentences")
{
    CHECK(split("First point\n\nsecond point") == std::vector<std::string>{"First point", "second point"});
}

TEST_CASE("offsets count code points")
{
    std::string const t = "Über café. Ça va.";
    auto const spans = segment_sentences(t);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].end == 10);
    CHECK(spans[1].start == 11);
    CHECK(split(t)[1] == "Ça va.");
}

TEST_CASE("segmentation invariants hold on random text")
{
    std::mt19937 rng(7);
    std::vector<std::string> const pieces{"The", "cat", "Dr.", "e.g.", "sat.", "Why?", "No!", " ", "  ", "\n", "\n\n",
                                          "3.5", "\"Hi.\"", "(x)", "https://a.b/c.d", "é", "A.", "ok", "."};
    for (int iter = 0; iter < 2000; ++iter) {
        std::string text;
        int const n = std::uniform_int_distribution<int>(0, 14)(rng);
        for (int i = 0; i < n; ++i) {
            text += pieces[std::uniform_int_distribution<std::size_t>(0, pieces.size() - 1)(rng)];
            if (std::uniform_int_distribution<int>(0, 2)(rng) > 0) text += ' ';
        }
        auto const cps = utf8::decode(text);
        auto const spans = segment_sentences(text);
        CHECK(segment_sentences(text) == spans);
        std::vector<int> cover(cps.size(), 0);
        for (std::size_t i = 0; i < spans.size(); ++i) {
            CHECK(spans[i].index == i);
            CHECK(spans[i].start < spans[i].end);
            CHECK(spans[i].end <= cps.size());
            if (i > 0) CHECK(spans[i - 1].end <= spans[i].start);
            CHECK(!utf8::is_space(cps[spans[i].start]));
            CHECK(!utf8::is_space(cps[spans[i].end - 1]));
            for (auto k = spans[i].start; k < spans[i].end; ++k) ++cover[k];
        }
        for (std::size_t k = 0; k < cps.size(); ++k)
            if (!utf8::is_space(cps[k])) CHECK(cover[k] == 1);
    }
}

TEST_CASE("abbreviation list is lowercase without periods")
{
    for (auto a : abbreviations()) {
        CHECK(!a.empty());
        CHECK(a.back() != '.');
        for (char c : a) CHECK(!(c >= 'A' && c <= 'Z'));
    }
}
