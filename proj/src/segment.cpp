#include "lfqa/segment.hpp"

#include <algorithm>
#include <iterator>

#include "lfqa/utf8.hpp"

namespace lfqa {

namespace {

constexpr std::string_view kAbbreviations[] = {
    "mr",   "mrs",  "ms",   "dr",   "prof", "sr",   "jr",    "st",  "mt",   "ft",   "vs",
    "e.g",  "i.e",  "cf",   "al",   "fig",  "figs", "eq",    "vol", "approx", "inc", "ltd",
    "co",   "corp", "dept", "est",  "gen",  "gov",  "col",   "lt",  "sgt",  "capt", "rev",
    "jan",  "feb",  "mar",  "apr",  "jun",  "jul",  "aug",   "sep", "sept", "oct",  "nov",
    "dec",  "u.s",  "u.k",  "u.n",  "ph.d", "b.c",  "a.d",
};

bool is_terminal(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

bool is_closer(char32_t c)
{
    return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == 0x201D || c == 0x2019 || c == 0xBB;
}

bool is_opener(char32_t c)
{
    return c == U'"' || c == U'\'' || c == U'(' || c == U'[' || c == 0x201C || c == 0x2018 || c == 0xAB;
}

bool is_upper(char32_t c)
{
    return (c >= U'A' && c <= U'Z') || (c >= 0xC0 && c <= 0xDE && c != 0xD7) || (c >= 0x391 && c <= 0x3A9) ||
           (c >= 0x400 && c <= 0x42F);
}

bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

bool is_letter(char32_t c)
{
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= 0xC0 && c <= 0x24F && c != 0xD7 && c != 0xF7);
}

char32_t lower(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + 32 : c; }

bool starts_with_at(std::u32string_view t, std::size_t i, std::u32string_view prefix)
{
    return t.substr(i, prefix.size()) == prefix;
}

// Marks code points covered by URLs, and by bracket groups that contain a URL.
std::vector<bool> protected_mask(std::u32string_view t)
{
    std::vector<bool> mask(t.size(), false);
    for (auto [start, end] : find_urls(t))
        for (std::size_t k = start; k < end; ++k) mask[k] = true;

    std::vector<std::size_t> stack;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] == U'(' || t[k] == U'[') {
            stack.push_back(k);
        } else if ((t[k] == U')' || t[k] == U']') && !stack.empty()) {
            char32_t want = t[k] == U')' ? U'(' : U'[';
            if (t[stack.back()] != want) continue;
            std::size_t open = stack.back();
            stack.pop_back();
            bool has_url = std::any_of(mask.begin() + static_cast<std::ptrdiff_t>(open),
                                       mask.begin() + static_cast<std::ptrdiff_t>(k), [](bool b) { return b; });
            if (has_url) std::fill(mask.begin() + static_cast<std::ptrdiff_t>(open),
                                   mask.begin() + static_cast<std::ptrdiff_t>(k) + 1, true);
        }
    }
    return mask;
}

bool suppressed_by_abbreviation(std::u32string_view t, std::size_t dot)
{
    std::size_t w = dot;
    while (w > 0 && (is_letter(t[w - 1]) || t[w - 1] == U'.')) --w;
    if (w == dot) return false;
    std::u32string word(t.substr(w, dot - w));
    if (word.size() == 1 && is_upper(word[0])) return true;
    std::string key;
    for (char32_t c : word) {
        char32_t lc = lower(c);
        if (lc >= 0x80) return false;
        key.push_back(static_cast<char>(lc));
    }
    return std::find(std::begin(kAbbreviations), std::end(kAbbreviations), key) != std::end(kAbbreviations);
}

} // namespace

std::vector<std::pair<std::size_t, std::size_t>> find_urls(std::u32string_view t)
{
    std::vector<std::pair<std::size_t, std::size_t>> urls;
    std::size_t i = 0;
    while (i < t.size()) {
        if (utf8::is_space(t[i])) { ++i; continue; }
        std::size_t tok_end = i;
        while (tok_end < t.size() && !utf8::is_space(t[tok_end])) ++tok_end;

        // The URL may start mid-token, as in "[label](http://...)".
        std::size_t url_start = std::u32string_view::npos;
        for (std::size_t k = i; k < tok_end; ++k) {
            if (starts_with_at(t, k, U"http://") || starts_with_at(t, k, U"https://") ||
                starts_with_at(t, k, U"ftp://") || starts_with_at(t, k, U"www.")) {
                url_start = k;
                break;
            }
        }
        if (url_start != std::u32string_view::npos) {
            std::size_t url_end = tok_end;
            while (url_end > url_start) {
                char32_t c = t[url_end - 1];
                if (c == U'.' || c == U',' || c == U';' || c == U':' || c == U'!' || c == U'?' || c == U'"' ||
                    c == U'\'' || c == 0x201D || c == 0x2019) {
                    --url_end;
                    continue;
                }
                if (c == U')' || c == U']') {
                    char32_t open = c == U')' ? U'(' : U'[';
                    auto body = t.substr(url_start, url_end - url_start);
                    auto opens = std::count(body.begin(), body.end(), open);
                    auto closes = std::count(body.begin(), body.end(), c);
                    if (closes > opens) { --url_end; continue; }
                }
                break;
            }
            if (url_end > url_start) urls.emplace_back(url_start, url_end);
        }
        i = tok_end;
    }
    return urls;
}

std::span<std::string_view const> abbreviations() noexcept
{
    return kAbbreviations;
}

std::vector<SentenceSpan> segment_sentences(std::u32string_view t)
{
    auto const mask = protected_mask(t);
    std::vector<std::size_t> cuts;

    std::size_t i = 0;
    while (i < t.size()) {
        char32_t c = t[i];
        if (c == U'\n') {
            std::size_t j = i;
            int newlines = 0;
            while (j < t.size() && utf8::is_space(t[j])) {
                if (t[j] == U'\n') ++newlines;
                ++j;
            }
            if (newlines >= 2) cuts.push_back(i);
            i = j;
            continue;
        }
        if (!is_terminal(c) || mask[i]) { ++i; continue; }

        std::size_t j = i;
        while (j < t.size() && is_terminal(t[j])) ++j;
        while (j < t.size() && is_closer(t[j])) ++j;
        if (j >= t.size() || !utf8::is_space(t[j])) { i = j; continue; }
        std::size_t k = j;
        while (k < t.size() && utf8::is_space(t[k])) ++k;
        if (k >= t.size()) { i = k; continue; }
        bool next_starts = is_upper(t[k]) || is_digit(t[k]) || is_opener(t[k]);
        bool abbrev = c == U'.' && !is_terminal(t[i + 1]) && suppressed_by_abbreviation(t, i);
        if (next_starts && !abbrev) cuts.push_back(j);
        i = j;
    }
    cuts.push_back(t.size());

    std::vector<SentenceSpan> spans;
    std::size_t prev = 0;
    for (std::size_t cut : cuts) {
        std::size_t s = prev;
        std::size_t e = cut;
        while (s < e && utf8::is_space(t[s])) ++s;
        while (e > s && utf8::is_space(t[e - 1])) --e;
        if (s < e) spans.push_back({spans.size(), s, e});
        prev = cut;
    }
    return spans;
}

std::vector<SentenceSpan> segment_sentences(std::string_view utf8_text)
{
    return segment_sentences(utf8::decode(utf8_text));
}

std::vector<std::string> sentence_texts(std::string_view utf8_text, std::vector<SentenceSpan> const& spans)
{
    auto const cps = utf8::decode(utf8_text);
    std::u32string_view view(cps);
    std::vector<std::string> out;
    out.reserve(spans.size());
    for (auto const& s : spans) out.push_back(utf8::encode(view.substr(s.start, s.end - s.start)));
    return out;
}

} // namespace lfqa
