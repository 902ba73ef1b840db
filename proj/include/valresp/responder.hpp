#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "valresp/corpus.hpp"
#include "valresp/nn/model.hpp"
#include "valresp/saliency.hpp"

namespace valresp::responder {

struct EmotionLexicon {
    std::vector<std::string> markers;  // validation markers, e.g. 確かに / 分かる
    std::array<std::string, corpus::kNumEmotions> emotion_words;
    std::string separator = "、";
    std::string sentence_end;

    // 怖い and びっくり are attested in the literature; the other six are editable defaults.
    static EmotionLexicon defaults();
    static EmotionLexicon from_json(const nlohmann::json& j);
    static EmotionLexicon load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void validate() const;  // ConfigError unless total over all 8 labels
};

const std::string& emotion_word(corpus::Emotion label, const EmotionLexicon& lex);

// Default noun test: a phrase (after trimming stop-list tokens at either end)
// is noun-bearing if it is not itself a stop word and does not end in an
// inflection suffix.
struct NounHeuristic {
    std::vector<std::string> stop_list;
    std::vector<std::string> inflection_suffixes;

    static NounHeuristic defaults();
    static NounHeuristic from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    bool is_stop(std::string_view token) const;
    // Candidate phrase with leading stop-list tokens and trailing particles removed.
    std::string core_phrase(const saliency::CauseCandidate& candidate) const;
    bool operator()(const saliency::CauseCandidate& candidate) const;
};

using NounPredicate = std::function<bool(const saliency::CauseCandidate&)>;

bool contains_noun(const saliency::CauseCandidate& candidate, const NounPredicate& noun_oracle);

enum class Branch { MarkerOnly, MarkerPlusEmotion, MarkerPlusCauseEmotion };
std::string_view to_string(Branch b);

struct ResponderConfig {
    double threshold = 0.95;  // the emotion is voiced only when confidence strictly exceeds this
    NounHeuristic noun = NounHeuristic::defaults();
    // Overrides the heuristic when set (e.g. a morphological analyzer).
    NounPredicate noun_oracle;
};

struct ResponseDecision {
    Branch branch = Branch::MarkerOnly;
    double threshold = 0.95;
    std::string marker;
    std::optional<saliency::CauseCandidate> cause;
    std::string cause_text;  // text placed in the cause slot
};

struct GeneratedResponse {
    std::string text;
    ResponseDecision decision;
};

// utterance keys the deterministic marker choice.
GeneratedResponse generate_response(const nn::Prediction& prediction,
                                    std::span<const saliency::CauseCandidate> causes, const EmotionLexicon& lex,
                                    const ResponderConfig& cfg, std::string_view utterance);

}  // namespace valresp::responder
