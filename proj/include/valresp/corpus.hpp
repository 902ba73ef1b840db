#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace valresp::corpus {

// Plutchik's eight basic emotions, in a fixed index order used by every model.
enum class Emotion : int { Fear = 0, Anger, Surprise, Disgust, Sadness, Joy, Anticipation, Trust };
inline constexpr std::size_t kNumEmotions = 8;
inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "fear", "anger", "surprise", "disgust", "sadness", "joy", "anticipation", "trust"};

std::string_view to_string(Emotion e);
std::optional<Emotion> try_parse_emotion(std::string_view name);
Emotion parse_emotion(std::string_view name);  // DataError naming the permitted labels
inline int index_of(Emotion e) { return static_cast<int>(e); }
Emotion emotion_from_index(int index);

enum class Speaker { A, B };
enum class Source { TextCorpus, SpokenCorpus, Synthetic };
enum class TimingLabel : int { NonValidating = 0, Validating = 1 };

std::string_view to_string(Source s);
std::string_view to_string(TimingLabel t);
TimingLabel parse_timing_label(std::string_view name);

struct Utterance {
    Speaker speaker = Speaker::A;
    std::string text;
    std::size_t index = 0;
    bool operator==(const Utterance&) const = default;
};

struct Dialogue {
    std::string id;
    std::vector<Utterance> turns;
    std::optional<Emotion> gold_emotion;
    std::optional<std::string> gold_cause;
    Source source = Source::TextCorpus;
    bool operator==(const Dialogue&) const = default;
};

struct LabeledExample {
    std::string context;
    std::optional<TimingLabel> timing_label;
    std::optional<Emotion> emotion_label;
    std::optional<std::string> cause_phrase;
    std::string dialogue_id;
    std::size_t turn = 0;
    bool operator==(const LabeledExample&) const = default;
};

// ---- file IO (JSON Lines) -------------------------------------------------

nlohmann::json to_json(const Dialogue& d);
Dialogue dialogue_from_json(const nlohmann::json& j);  // validates invariants
std::vector<Dialogue> load_dialogues(const std::filesystem::path& path);
void save_dialogues(const std::filesystem::path& path, std::span<const Dialogue> dialogues);
std::string dialogues_to_jsonl(std::span<const Dialogue> dialogues);

nlohmann::json to_json(const LabeledExample& e);
LabeledExample example_from_json(const nlohmann::json& j);
std::vector<LabeledExample> load_examples(const std::filesystem::path& path);
void save_examples(const std::filesystem::path& path, std::span<const LabeledExample> examples);

// ---- validation-timing annotation -----------------------------------------

enum class Normalization { None, UnicodeCompat };

// 「それは＋<emotion word>＋…ね」: prefix, one lexicon word, then the suffix within
// max_gap code points.
struct EmotionFrame {
    std::string prefix = "それは";
    std::string suffix = "ね";
    std::size_t max_gap = 4;
    std::vector<std::string> emotion_words;
};

struct PhraseRuleSet {
    std::vector<std::string> literal_patterns;
    EmotionFrame emotion_frame;
    Normalization normalization = Normalization::UnicodeCompat;
    // Orthographic variants rewritten to a canonical spelling before matching (分か -> わか).
    std::vector<std::pair<std::string, std::string>> variants;

    static PhraseRuleSet from_json(const nlohmann::json& j);
    static PhraseRuleSet load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void validate() const;  // ConfigError when empty or a pattern normalizes to nothing
};

// Normalization used on both responses and patterns before matching.
std::string normalize_for_matching(std::string_view text, const PhraseRuleSet& rules);

bool is_validating_response(std::string_view response, const PhraseRuleSet& rules);

// Up to three utterances ending at target_turn, oldest first, joined by the turn separator.
std::string build_timing_context(std::span<const Utterance> turns, std::size_t target_turn);
std::string build_timing_context(const Dialogue& dialogue, std::size_t target_turn);
std::string join_context(std::span<const std::string> utterances);
inline constexpr std::size_t kContextWindow = 3;

// One example per adjacent (utterance, response) pair.
std::vector<LabeledExample> annotate_validation(const Dialogue& dialogue, const PhraseRuleSet& rules);

// Emotion example from the utterance carrying the gold cause (or the first
// speaker-A turn); nullopt when the dialogue has no gold emotion.
std::optional<LabeledExample> emotion_example(const Dialogue& dialogue);

// ---- spoken-dialogue preprocessing ------------------------------------------

struct SpokenFilterConfig {
    std::vector<std::string> backchannel_list;
    std::vector<std::string> laughter_markers;
    std::vector<std::string> filler_list;
    std::size_t max_tail_words = 50;

    static SpokenFilterConfig from_json(const nlohmann::json& j);
    static SpokenFilterConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

Dialogue preprocess_spoken(const Dialogue& dialogue, const SpokenFilterConfig& cfg);

// ---- splitting ----------------------------------------------------------------

struct SplitSpec {
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
    std::uint64_t seed = 0;
    void validate() const;
};

struct Splits {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> dev;
    std::vector<LabeledExample> test;
};

// Groups by dialogue id so no dialogue spans two splits.
Splits split_dataset(std::span<const LabeledExample> examples, const SplitSpec& spec);

// ---- synthetic corpus -------------------------------------------------------------

struct SynthesisConfig {
    std::size_t num_dialogues = 2000;
    double validating_rate = 0.29;
    // Share of dialogues that open with an opener/listener exchange before the
    // keyword turn; the rest start directly with it.
    double lead_in_rate = 0.5;
    // Share of dialogues that continue with a keyword-free turn and a neutral reply
    // after the keyword exchange.
    double follow_up_rate = 0.5;
    std::array<std::vector<std::string>, kNumEmotions> keywords;
    std::array<std::string, kNumEmotions> emotion_words;
    std::vector<std::string> openers;
    std::vector<std::string> listener_turns;
    // Speaker templates containing "{keyword}" and "{cue}".
    std::vector<std::string> templates;
    std::vector<std::string> eliciting_cues;
    std::vector<std::string> neutral_cues;
    // May contain "{emotion_word}".
    std::vector<std::string> validating_responses;
    std::vector<std::string> neutral_responses;

    static SynthesisConfig from_json(const nlohmann::json& j);
    static SynthesisConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void validate() const;
};

// A/B dialogues built around one keyword turn (gold cause) and its response, which
// is validating with probability validating_rate. With probability lead_in_rate
// an opener/listener pair comes first, so the keyword turn is turn 0 or turn 2.
// With probability follow_up_rate a filler turn and a neutral reply come after it.
std::vector<Dialogue> generate_synthetic(const SynthesisConfig& cfg, std::uint64_t seed);

}  // namespace valresp::corpus
