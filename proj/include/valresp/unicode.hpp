#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace valresp::unicode {

struct ByteSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const ByteSpan&) const = default;
};

// NFKC compatibility normalization. Invalid UTF-8 raises DataError.
std::string nfkc(std::string_view text);

// Extended grapheme cluster boundaries as UTF-8 byte spans covering the whole input.
std::vector<ByteSpan> grapheme_spans(std::string_view text);

// Maximal runs of non-whitespace code points.
std::vector<ByteSpan> word_spans(std::string_view text);

bool is_whitespace(std::string_view grapheme);

std::string trim(std::string_view text);

std::size_t codepoint_count(std::string_view text);

// Removes every Unicode whitespace code point.
std::string strip_whitespace(std::string_view text);

bool valid_utf8(std::string_view text);

}  // namespace valresp::unicode
