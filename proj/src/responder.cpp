#include "valresp/responder.hpp"

#include <algorithm>

#include <fstream>
#include <sstream>

#include "valresp/error.hpp"
#include "valresp/rng.hpp"

namespace valresp::responder {

EmotionLexicon EmotionLexicon::defaults() {
    EmotionLexicon lex;
    lex.markers = {"確かに", "分かる"};
    lex.emotion_words = {"怖い", "腹立たしい", "びっくり", "嫌", "悲しい", "嬉しい", "楽しみ", "心強い"};
    return lex;
}

EmotionLexicon EmotionLexicon::from_json(const nlohmann::json& j) {
    try {
        EmotionLexicon lex;
        lex.markers = j.at("markers").get<std::vector<std::string>>();
        const auto& words = j.at("emotion_words");
        for (std::size_t i = 0; i < corpus::kNumEmotions; ++i) {
            const std::string name(corpus::kEmotionNames[i]);
            if (!words.contains(name)) throw ConfigError("emotion lexicon has no word for '" + name + "'");
            lex.emotion_words[i] = words.at(name).get<std::string>();
        }
        for (auto it = words.begin(); it != words.end(); ++it) {
            if (!corpus::try_parse_emotion(it.key())) throw ConfigError("emotion lexicon has unknown label '" + it.key() + "'");
        }
        lex.separator = j.value("separator", lex.separator);
        lex.sentence_end = j.value("sentence_end", lex.sentence_end);
        lex.validate();
        return lex;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed emotion lexicon: ") + e.what());
    }
}

EmotionLexicon EmotionLexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open lexicon " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return from_json(nlohmann::json::parse(ss.str()));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

nlohmann::json EmotionLexicon::to_json() const {
    nlohmann::json words = nlohmann::json::object();
    for (std::size_t i = 0; i < corpus::kNumEmotions; ++i) words[std::string(corpus::kEmotionNames[i])] = emotion_words[i];
    return {{"markers", markers}, {"emotion_words", words}, {"separator", separator}, {"sentence_end", sentence_end}};
}

void EmotionLexicon::validate() const {
    if (markers.empty()) throw ConfigError("emotion lexicon needs at least one validation marker");
    for (const auto& m : markers) {
        if (m.empty()) throw ConfigError("empty validation marker");
    }
    for (std::size_t i = 0; i < corpus::kNumEmotions; ++i) {
        if (emotion_words[i].empty()) {
            throw ConfigError("emotion lexicon word for '" + std::string(corpus::kEmotionNames[i]) + "' is empty");
        }
    }
}

const std::string& emotion_word(corpus::Emotion label, const EmotionLexicon& lex) {
    return lex.emotion_words.at(static_cast<std::size_t>(corpus::index_of(label)));
}

// ---- noun heuristic -------------------------------------------------------------

NounHeuristic NounHeuristic::defaults() {
    NounHeuristic h;
    h.stop_list = {"は", "が", "を", "に", "で", "と", "も", "の", "へ", "や", "から", "まで", "より", "ね", "よ",
                   "か", "な", "だ", "です", "ます", "し", "て", "た", "、", "。", "！", "？", "!", "?", "…"};
    h.inflection_suffixes = {"た", "だ", "い", "る", "う", "く", "す", "て", "で", "ない", "ます", "です"};
    return h;
}

NounHeuristic NounHeuristic::from_json(const nlohmann::json& j) {
    NounHeuristic h = defaults();
    if (j.contains("stop_list")) h.stop_list = j.at("stop_list").get<std::vector<std::string>>();
    if (j.contains("inflection_suffixes")) {
        h.inflection_suffixes = j.at("inflection_suffixes").get<std::vector<std::string>>();
    }
    return h;
}

nlohmann::json NounHeuristic::to_json() const {
    return {{"stop_list", stop_list}, {"inflection_suffixes", inflection_suffixes}};
}

bool NounHeuristic::is_stop(std::string_view token) const {
    for (const auto& s : stop_list) {
        if (s == token) return true;
    }
    return false;
}

std::string NounHeuristic::core_phrase(const saliency::CauseCandidate& c) const {
    if (c.tokens.empty()) return is_stop(c.phrase) ? std::string() : c.phrase;
    std::size_t first = 0;
    std::size_t last = c.tokens.size();
    while (first < last && is_stop(c.tokens[first])) ++first;
    // A trailing inflection ending stays attached so the suffix test can see it.
    const auto is_suffix = [this](const std::string& t) {
        return std::find(inflection_suffixes.begin(), inflection_suffixes.end(), t) != inflection_suffixes.end();
    };
    while (last > first && is_stop(c.tokens[last - 1]) && !is_suffix(c.tokens[last - 1])) --last;
    std::string out;
    for (std::size_t i = first; i < last; ++i) out += c.tokens[i];
    return out;
}

bool NounHeuristic::operator()(const saliency::CauseCandidate& c) const {
    const std::string core = core_phrase(c);
    if (core.empty() || is_stop(core)) return false;
    for (const auto& suffix : inflection_suffixes) {
        if (!suffix.empty() && core.size() >= suffix.size() &&
            core.compare(core.size() - suffix.size(), suffix.size(), suffix) == 0) {
            return false;
        }
    }
    return true;
}

bool contains_noun(const saliency::CauseCandidate& candidate, const NounPredicate& noun_oracle) {
    return noun_oracle(candidate);
}

std::string_view to_string(Branch b) {
    switch (b) {
        case Branch::MarkerOnly: return "marker_only";
        case Branch::MarkerPlusEmotion: return "marker_plus_emotion";
        case Branch::MarkerPlusCauseEmotion: return "marker_plus_cause_emotion";
    }
    return "marker_only";
}

GeneratedResponse generate_response(const nn::Prediction& prediction,
                                    std::span<const saliency::CauseCandidate> causes, const EmotionLexicon& lex,
                                    const ResponderConfig& cfg, std::string_view utterance) {
    if (prediction.label < 0 || prediction.label >= static_cast<int>(corpus::kNumEmotions)) {
        throw PreconditionError("prediction label " + std::to_string(prediction.label) + " is not an emotion class");
    }
    lex.validate();
    const auto label = corpus::emotion_from_index(prediction.label);
    const std::string& word = emotion_word(label, lex);

    GeneratedResponse out;
    auto& d = out.decision;
    d.threshold = cfg.threshold;
    d.marker = lex.markers[fnv1a64(utterance) % lex.markers.size()];

    if (!(prediction.confidence > cfg.threshold)) {
        d.branch = Branch::MarkerOnly;
        out.text = d.marker + lex.sentence_end;
        return out;
    }
    for (const auto& c : causes) {
        const bool noun = cfg.noun_oracle ? contains_noun(c, cfg.noun_oracle) : cfg.noun(c);
        if (!noun) continue;
        d.branch = Branch::MarkerPlusCauseEmotion;
        d.cause = c;
        d.cause_text = cfg.noun_oracle ? c.phrase : cfg.noun.core_phrase(c);
        out.text = d.marker + lex.separator + d.cause_text + "は" + word + "ですね" + lex.sentence_end;
        return out;
    }
    d.branch = Branch::MarkerPlusEmotion;
    out.text = d.marker + lex.separator + "それは" + word + "ですね" + lex.sentence_end;
    return out;
}

}  // namespace valresp::responder
