#include "valresp/text.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "valresp/error.hpp"
#include "valresp/rng.hpp"

namespace valresp::text {

std::string_view to_string(TokenizerMode mode) {
    return mode == TokenizerMode::Character ? "character" : "whitespace";
}

TokenizerMode tokenizer_mode_from_string(std::string_view name) {
    if (name == "character") return TokenizerMode::Character;
    if (name == "whitespace") return TokenizerMode::Whitespace;
    throw ConfigError("unknown tokenizer mode '" + std::string(name) + "' (expected character|whitespace)");
}

std::string normalize_model_text(std::string_view text) {
    std::string out = unicode::nfkc(text);
    for (std::size_t pos = out.find(kTurnSeparator); pos != std::string::npos;
         pos = out.find(kTurnSeparator, pos)) {
        out.replace(pos, kTurnSeparator.size(), " ");
    }
    return out;
}

TokenSequence tokenize(std::string_view text, TokenizerMode mode) {
    TokenSequence seq;
    const auto spans = mode == TokenizerMode::Character ? unicode::grapheme_spans(text) : unicode::word_spans(text);
    for (const auto& span : spans) {
        const auto piece = text.substr(span.begin, span.end - span.begin);
        if (mode == TokenizerMode::Character && unicode::is_whitespace(piece)) continue;
        seq.tokens.emplace_back(piece);
        seq.char_spans.push_back(span);
    }
    return seq;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenizerMode mode)
    : tokens_(std::move(tokens)), mode_(mode) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
            throw DataError("vocabulary token '" + tokens_[i] + "' appears twice");
        }
    }
}

Vocabulary Vocabulary::build(std::span<const TokenSequence> corpus, int min_freq, TokenizerMode mode) {
    if (min_freq < 1) throw ConfigError("min_freq must be positive");
    std::map<std::string, long> counts;
    for (const auto& seq : corpus) {
        for (const auto& tok : seq.tokens) ++counts[tok];
    }
    std::vector<std::string> tokens{std::string(kPadToken), std::string(kUnkToken), std::string(kMaskToken),
                                    std::string(kTurnSeparator)};
    std::vector<std::pair<std::string, long>> ranked;
    for (auto& [tok, n] : counts) {
        if (n < min_freq) continue;
        if (std::find(tokens.begin(), tokens.end(), tok) != tokens.end()) continue;
        ranked.emplace_back(tok, n);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (auto& [tok, n] : ranked) tokens.push_back(tok);
    return Vocabulary(std::move(tokens), mode);
}

int Vocabulary::id_of(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                        std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

nlohmann::json Vocabulary::to_json() const {
    nlohmann::json tokens = nlohmann::json::object();
    for (std::size_t i = 0; i < tokens_.size(); ++i) tokens[tokens_[i]] = i;
    return {{"format", "valresp-vocab"},
            {"version", 1},
            {"mode", to_string(mode_)},
            {"reserved", {{"pad", kPadId}, {"unk", kUnkId}, {"mask", kMaskId}, {"sep", kSepId}}},
            {"tokens", tokens}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "valresp-vocab") throw DataError("not a vocabulary document");
        if (doc.at("version") != 1) throw DataError("unsupported vocabulary version");
        const auto& reserved = doc.at("reserved");
        if (reserved.at("pad") != kPadId || reserved.at("unk") != kUnkId || reserved.at("mask") != kMaskId ||
            reserved.at("sep") != kSepId) {
            throw DataError("vocabulary reserved ids do not match this build");
        }
        const auto& map = doc.at("tokens");
        std::vector<std::string> tokens(map.size());
        std::vector<bool> seen(map.size(), false);
        for (auto it = map.begin(); it != map.end(); ++it) {
            const auto id = it.value().get<long>();
            if (id < 0 || static_cast<std::size_t>(id) >= tokens.size() || seen[static_cast<std::size_t>(id)]) {
                throw DataError("vocabulary ids are not a dense bijection");
            }
            seen[static_cast<std::size_t>(id)] = true;
            tokens[static_cast<std::size_t>(id)] = it.key();
        }
        if (tokens.size() < kNumReserved || tokens[kPadId] != kPadToken || tokens[kUnkId] != kUnkToken ||
            tokens[kMaskId] != kMaskToken || tokens[kSepId] != kTurnSeparator) {
            throw DataError("vocabulary is missing reserved tokens");
        }
        return Vocabulary(std::move(tokens), tokenizer_mode_from_string(doc.at("mode").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed vocabulary: ") + e.what());
    }
}

std::string Vocabulary::fingerprint() const {
    std::string joined(to_string(mode_));
    for (const auto& t : tokens_) {
        joined.push_back('\0');
        joined += t;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(joined)));
    return buf;
}

std::vector<int> encode(const TokenSequence& seq, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(seq.tokens.size());
    for (const auto& tok : seq.tokens) {
        int id = vocab.id_of(tok);
        // Raw text spelling "[PAD]" etc. must never alias a control id.
        if (id != kSepId && is_reserved(id)) id = kUnkId;
        ids.push_back(id);
    }
    return ids;
}

void encode_in_place(TokenSequence& seq, const Vocabulary& vocab) { seq.ids = encode(seq, vocab); }

std::vector<std::string> decode(std::span<const int> ids, const Vocabulary& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
}

void truncate_front(TokenSequence& seq, std::size_t max_len) {
    if (seq.tokens.size() <= max_len) return;
    const auto drop = static_cast<std::ptrdiff_t>(seq.tokens.size() - max_len);
    seq.tokens.erase(seq.tokens.begin(), seq.tokens.begin() + drop);
    seq.char_spans.erase(seq.char_spans.begin(), seq.char_spans.begin() + drop);
    if (!seq.ids.empty()) seq.ids.erase(seq.ids.begin(), seq.ids.begin() + drop);
}

}  // namespace valresp::text
