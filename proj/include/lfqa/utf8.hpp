#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace lfqa::utf8 {

/// Decodes UTF-8 into Unicode scalar values. Invalid sequences decode to U+FFFD,
/// one replacement per offending byte, so offsets stay stable.
std::u32string decode(std::string_view bytes);

std::string encode(std::u32string_view text);

/// Number of Unicode scalar values in `bytes`.
std::size_t length(std::string_view bytes);

/// Code points [start, end) of `bytes`, re-encoded as UTF-8.
std::string substr(std::string_view bytes, std::size_t start, std::size_t end);

bool is_space(char32_t c) noexcept;

} // namespace lfqa::utf8
