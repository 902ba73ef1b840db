#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "valresp/unicode.hpp"

namespace valresp::text {

enum class TokenizerMode { Character, Whitespace };

std::string_view to_string(TokenizerMode mode);
TokenizerMode tokenizer_mode_from_string(std::string_view name);

// Reserved ids are fixed; the turn separator doubles as the SEP token so that
// contexts joined with it tokenize straight onto the reserved id.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kMaskId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kNumReserved = 4;

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kTurnSeparator = "⟐";  // ⟐

inline bool is_reserved(int id) { return id >= 0 && id < kNumReserved; }

using Span = unicode::ByteSpan;

struct TokenSequence {
    std::vector<std::string> tokens;
    std::vector<int> ids;  // filled by encode()
    std::vector<Span> char_spans;  // UTF-8 byte offsets into the tokenized text

    std::size_t size() const { return tokens.size(); }
};

TokenSequence tokenize(std::string_view text, TokenizerMode mode);

// Model-side normalization: NFKC plus removal of any literal separator glyph,
// so the separator can only enter a sequence through context construction.
std::string normalize_model_text(std::string_view text);

class Vocabulary {
public:
    // Ids are assigned by descending frequency, then byte-lexicographic order.
    static Vocabulary build(std::span<const TokenSequence> corpus, int min_freq, TokenizerMode mode);

    static Vocabulary from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;

    int id_of(std::string_view token) const;  // kUnkId when absent
    bool contains(std::string_view token) const;
    const std::string& token(int id) const;   // throws DataError on out-of-range id
    std::size_t size() const { return tokens_.size(); }
    TokenizerMode mode() const { return mode_; }

    // Stable content hash; checkpoints refer to their vocabulary through it.
    std::string fingerprint() const;

    bool operator==(const Vocabulary& other) const {
        return mode_ == other.mode_ && tokens_ == other.tokens_;
    }

private:
    Vocabulary(std::vector<std::string> tokens, TokenizerMode mode);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    TokenizerMode mode_ = TokenizerMode::Character;
};

std::vector<int> encode(const TokenSequence& seq, const Vocabulary& vocab);
void encode_in_place(TokenSequence& seq, const Vocabulary& vocab);
std::vector<std::string> decode(std::span<const int> ids, const Vocabulary& vocab);

// Keeps the last max_len entries (most recent context wins).
template <typename T>
std::vector<T> truncate_front(std::vector<T> items, std::size_t max_len) {
    if (items.size() > max_len) items.erase(items.begin(), items.end() - static_cast<std::ptrdiff_t>(max_len));
    return items;
}

void truncate_front(TokenSequence& seq, std::size_t max_len);

}  // namespace valresp::text
