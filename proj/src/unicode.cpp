#include "valresp/unicode.hpp"

#include <memory>

#include <unicode/brkiter.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utext.h>
#include <unicode/utf8.h>

#include "valresp/error.hpp"

namespace valresp::unicode {

namespace {

// Decodes the code point starting at byte offset i and advances i.
UChar32 next_codepoint(std::string_view text, std::size_t& i) {
    UChar32 c = 0;
    auto offset = static_cast<int32_t>(i);
    U8_NEXT(reinterpret_cast<const uint8_t*>(text.data()), offset, static_cast<int32_t>(text.size()), c);
    i = static_cast<std::size_t>(offset);
    return c;
}

icu::BreakIterator& character_iterator() {
    thread_local std::unique_ptr<icu::BreakIterator> iter = [] {
        UErrorCode status = U_ZERO_ERROR;
        std::unique_ptr<icu::BreakIterator> it(
            icu::BreakIterator::createCharacterInstance(icu::Locale::getRoot(), status));
        if (U_FAILURE(status)) {
            throw RuntimeError(std::string("ICU break iterator unavailable: ") + u_errorName(status));
        }
        return it;
    }();
    return *iter;
}

}  // namespace

bool valid_utf8(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
        if (next_codepoint(text, i) < 0) return false;
    }
    return true;
}

std::string nfkc(std::string_view text) {
    if (!valid_utf8(text)) throw DataError("text is not valid UTF-8");
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFKCInstance(status);
    if (U_FAILURE(status)) throw RuntimeError(std::string("ICU NFKC unavailable: ") + u_errorName(status));
    const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    icu::UnicodeString out = norm->normalize(src, status);
    if (U_FAILURE(status)) throw DataError(std::string("normalization failed: ") + u_errorName(status));
    std::string result;
    out.toUTF8String(result);
    return result;
}

std::vector<ByteSpan> grapheme_spans(std::string_view text) {
    std::vector<ByteSpan> spans;
    if (text.empty()) return spans;
    if (!valid_utf8(text)) throw DataError("text is not valid UTF-8");
    UErrorCode status = U_ZERO_ERROR;
    UText* ut = utext_openUTF8(nullptr, text.data(), static_cast<int64_t>(text.size()), &status);
    if (U_FAILURE(status)) throw RuntimeError(std::string("ICU utext failed: ") + u_errorName(status));
    auto& iter = character_iterator();
    iter.setText(ut, status);
    if (U_FAILURE(status)) {
        utext_close(ut);
        throw RuntimeError(std::string("ICU setText failed: ") + u_errorName(status));
    }
    int32_t start = iter.first();
    for (int32_t end = iter.next(); end != icu::BreakIterator::DONE; start = end, end = iter.next()) {
        spans.push_back({static_cast<std::size_t>(start), static_cast<std::size_t>(end)});
    }
    // Detach the iterator from the UText before closing it.
    iter.setText(icu::UnicodeString());
    utext_close(ut);
    return spans;
}

bool is_whitespace(std::string_view grapheme) {
    if (grapheme.empty()) return false;
    std::size_t i = 0;
    while (i < grapheme.size()) {
        if (!u_isUWhiteSpace(next_codepoint(grapheme, i))) return false;
    }
    return true;
}

std::vector<ByteSpan> word_spans(std::string_view text) {
    std::vector<ByteSpan> spans;
    std::size_t i = 0;
    bool in_word = false;
    std::size_t word_begin = 0;
    while (i < text.size()) {
        const std::size_t at = i;
        const UChar32 c = next_codepoint(text, i);
        if (c < 0) throw DataError("text is not valid UTF-8");
        const bool space = u_isUWhiteSpace(c);
        if (!space && !in_word) {
            in_word = true;
            word_begin = at;
        } else if (space && in_word) {
            in_word = false;
            spans.push_back({word_begin, at});
        }
    }
    if (in_word) spans.push_back({word_begin, text.size()});
    return spans;
}

std::string trim(std::string_view text) {
    const auto words = word_spans(text);
    if (words.empty()) return {};
    return std::string(text.substr(words.front().begin, words.back().end - words.front().begin));
}

std::size_t codepoint_count(std::string_view text) {
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        next_codepoint(text, i);
        ++n;
    }
    return n;
}

std::string strip_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t at = i;
        const UChar32 c = next_codepoint(text, i);
        if (c >= 0 && u_isUWhiteSpace(c)) continue;
        out.append(text.substr(at, i - at));
    }
    return out;
}

}  // namespace valresp::unicode
