#include <doctest.h>

#include "support.hpp"
#include "valresp/error.hpp"
#include "valresp/text.hpp"
#include "valresp/unicode.hpp"

using namespace valresp;
using text::TokenizerMode;

namespace {

text::Vocabulary vocab_of(const std::vector<std::string>& texts, TokenizerMode mode, int min_freq = 1) {
    std::vector<text::TokenSequence> seqs;
    for (const auto& t : texts) seqs.push_back(text::tokenize(t, mode));
    return text::Vocabulary::build(seqs, min_freq, mode);
}

}  // namespace

TEST_CASE("character tokenization splits graphemes") {
    const auto seq = text::tokenize("怖い", TokenizerMode::Character);
    CHECK(seq.tokens == std::vector<std::string>{"怖", "い"});
    CHECK(seq.char_spans.size() == 2);
}

TEST_CASE("whitespace tokenization splits on runs") {
    const auto seq = text::tokenize("I was scared", TokenizerMode::Whitespace);
    CHECK(seq.tokens == std::vector<std::string>{"I", "was", "scared"});
    const auto runs = text::tokenize("  a \t\n b  ", TokenizerMode::Whitespace);
    CHECK(runs.tokens == std::vector<std::string>{"a", "b"});
}

TEST_CASE("empty input gives empty sequence") {
    CHECK(text::tokenize("", TokenizerMode::Character).size() == 0);
    CHECK(text::tokenize("", TokenizerMode::Whitespace).size() == 0);
}

TEST_CASE("combining sequences stay one grapheme") {
    // e + combining acute, and a flag made of two regional indicators
    const std::string s = "e\xCC\x81\xF0\x9F\x87\xAF\xF0\x9F\x87\xB5";
    const auto seq = text::tokenize(s, TokenizerMode::Character);
    CHECK(seq.size() == 2);
}

TEST_CASE("spans reassemble the source") {
    const std::vector<std::string> inputs = {"昨日 蛾が 出た", "a  b\tc", "それは怖いですね", " lead and trail "};
    for (auto mode : {TokenizerMode::Character, TokenizerMode::Whitespace}) {
        for (const auto& s : inputs) {
            const auto seq = text::tokenize(s, mode);
            REQUIRE(seq.tokens.size() == seq.char_spans.size());
            std::string rebuilt;
            std::size_t cursor = 0;
            for (std::size_t i = 0; i < seq.size(); ++i) {
                const auto sp = seq.char_spans[i];
                CHECK(sp.begin >= cursor);
                // gaps hold only dropped whitespace
                CHECK(unicode::strip_whitespace(s.substr(cursor, sp.begin - cursor)).empty());
                CHECK(s.substr(sp.begin, sp.end - sp.begin) == seq.tokens[i]);
                rebuilt += s.substr(cursor, sp.end - cursor);
                cursor = sp.end;
            }
            rebuilt += s.substr(cursor);
            CHECK(rebuilt == s);
            CHECK(unicode::strip_whitespace(s.substr(cursor)).empty());
        }
    }
}

TEST_CASE("vocabulary enumerates reserved tokens then by frequency") {
    const auto v = vocab_of({"a a b"}, TokenizerMode::Whitespace);
    CHECK(v.size() == 6);
    CHECK(v.token(text::kPadId) == "[PAD]");
    CHECK(v.token(text::kUnkId) == "[UNK]");
    CHECK(v.token(text::kMaskId) == "[MASK]");
    CHECK(v.token(text::kSepId) == std::string(text::kTurnSeparator));
    CHECK(v.id_of("a") == 4);
    CHECK(v.id_of("b") == 5);
}

TEST_CASE("min_freq excludes rare tokens") {
    const auto v = vocab_of({"a a b"}, TokenizerMode::Whitespace, 2);
    CHECK(v.size() == 5);
    CHECK_FALSE(v.contains("b"));
}

TEST_CASE("frequency ties break lexicographically") {
    const auto v = vocab_of({"c b a c"}, TokenizerMode::Whitespace);
    CHECK(v.id_of("c") == 4);
    CHECK(v.id_of("a") == 5);
    CHECK(v.id_of("b") == 6);
}

TEST_CASE("vocabulary build is deterministic and order independent") {
    const auto v1 = vocab_of({"x y z", "y z", "z"}, TokenizerMode::Whitespace);
    const auto v2 = vocab_of({"x y z", "y z", "z"}, TokenizerMode::Whitespace);
    const auto v3 = vocab_of({"z", "y z", "z y x"}, TokenizerMode::Whitespace);
    CHECK(v1 == v2);
    CHECK(v1 == v3);
    CHECK(v1.fingerprint() == v3.fingerprint());
}

TEST_CASE("encode maps unknown tokens to UNK") {
    const auto v = vocab_of({"a a b"}, TokenizerMode::Whitespace);
    const auto ids = text::encode(text::tokenize("a q b", TokenizerMode::Whitespace), v);
    CHECK(ids == std::vector<int>{4, text::kUnkId, 5});
}

TEST_CASE("control token spellings in raw text never alias control ids") {
    const auto v = vocab_of({"a"}, TokenizerMode::Whitespace);
    const auto ids = text::encode(text::tokenize("[PAD] [MASK] [UNK] a", TokenizerMode::Whitespace), v);
    CHECK(ids == std::vector<int>{text::kUnkId, text::kUnkId, text::kUnkId, 4});
}

TEST_CASE("turn separator encodes to SEP") {
    const auto v = vocab_of({"あい"}, TokenizerMode::Character);
    const auto ids = text::encode(text::tokenize("あ ⟐ い", TokenizerMode::Character), v);
    CHECK(ids == std::vector<int>{v.id_of("あ"), text::kSepId, v.id_of("い")});
}

TEST_CASE("decode rejects out-of-range ids") {
    const auto v = vocab_of({"a b"}, TokenizerMode::Whitespace);
    const std::vector<int> bad{static_cast<int>(v.size()) + 5};
    CHECK_THROWS_AS(text::decode(bad, v), DataError);
    const std::vector<int> neg{-1};
    CHECK_THROWS_AS(text::decode(neg, v), DataError);
}

TEST_CASE("property: encode/decode round trip on in-vocabulary sequences") {
    const auto v = vocab_of({"犬 猫 鳥 魚 虫 a b c d e"}, TokenizerMode::Whitespace);
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        text::TokenSequence seq;
        const auto n = 1 + rng.below(12);
        for (std::uint64_t i = 0; i < n; ++i) {
            seq.tokens.push_back(v.token(text::kNumReserved + static_cast<int>(rng.below(v.size() - text::kNumReserved))));
        }
        const auto ids = text::encode(seq, v);
        CHECK(text::decode(ids, v) == seq.tokens);
    }
}

TEST_CASE("vocabulary JSON round trip") {
    const auto v = vocab_of({"昨日 蛾 が 出た", "蛾 が"}, TokenizerMode::Whitespace);
    const auto back = text::Vocabulary::from_json(v.to_json());
    CHECK(back == v);
    CHECK(back.mode() == TokenizerMode::Whitespace);
    auto broken = v.to_json();
    broken["reserved"]["pad"] = 7;
    CHECK_THROWS_AS(text::Vocabulary::from_json(broken), DataError);
    auto gap = v.to_json();
    gap["tokens"]["extra"] = 999;
    CHECK_THROWS_AS(text::Vocabulary::from_json(gap), DataError);
}

TEST_CASE("truncation keeps the most recent tokens") {
    auto seq = text::tokenize("abcdef", TokenizerMode::Character);
    const auto v = vocab_of({"abcdef"}, TokenizerMode::Character);
    text::encode_in_place(seq, v);
    text::truncate_front(seq, 4);
    CHECK(seq.tokens == std::vector<std::string>{"c", "d", "e", "f"});
    CHECK(seq.ids.size() == 4);
    CHECK(seq.char_spans.front().begin == 2);
    CHECK(text::truncate_front(std::vector<int>{1, 2, 3}, 5) == std::vector<int>{1, 2, 3});
    CHECK(text::truncate_front(std::vector<int>{1, 2, 3}, 2) == std::vector<int>{2, 3});
}

TEST_CASE("model text normalization folds compatibility forms and strips separators") {
    CHECK(text::normalize_model_text("ＡＢＣ１") == "ABC1");
    CHECK(text::normalize_model_text("a⟐b") == "a b");
}

TEST_CASE("invalid UTF-8 is a data error") {
    CHECK_THROWS_AS(text::tokenize(std::string("\xff\xfe"), TokenizerMode::Character), DataError);
}

TEST_CASE("tokenizer mode names") {
    CHECK(text::tokenizer_mode_from_string("character") == TokenizerMode::Character);
    CHECK(text::tokenizer_mode_from_string("whitespace") == TokenizerMode::Whitespace);
    CHECK_THROWS_AS(text::tokenizer_mode_from_string("bpe"), ConfigError);
}
