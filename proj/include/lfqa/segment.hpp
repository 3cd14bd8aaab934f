#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lfqa {

/// One sentence of a text, as code-point offsets [start, end).
struct SentenceSpan {
    std::size_t index = 0;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(SentenceSpan const&) const = default;
};

// Rule-based sentence segmentation.
//
// A boundary is placed after a run of '.', '!' or '?' (plus any closing quotes or brackets) when
// it is followed by whitespace and then an uppercase letter, a digit, or an opening quote or
// bracket. A blank line (two or more line breaks) is also a boundary. Boundaries are suppressed
// when the word before a '.' is in abbreviations(), is a single letter (an initial), or when the
// punctuation sits inside a URL or inside a bracketed group that contains a URL.
//
// Spans start at the first non-whitespace code point and end after the last non-whitespace code
// point of the sentence, so every non-whitespace code point is covered by exactly one span.
std::vector<SentenceSpan> segment_sentences(std::u32string_view text);
std::vector<SentenceSpan> segment_sentences(std::string_view utf8_text);

/// Code-point ranges [first, second) of URLs (http://, https://, ftp://, www.), without trailing
/// sentence punctuation or unbalanced closing brackets.
std::vector<std::pair<std::size_t, std::size_t>> find_urls(std::u32string_view text);

/// Lowercase abbreviations (without the trailing '.') that never end a sentence.
std::span<std::string_view const> abbreviations() noexcept;

/// UTF-8 text of each span.
std::vector<std::string> sentence_texts(std::string_view utf8_text, std::vector<SentenceSpan> const& spans);

} // namespace lfqa
