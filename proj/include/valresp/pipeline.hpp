#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "valresp/corpus.hpp"
#include "valresp/metrics.hpp"
#include "valresp/nn/checkpoint.hpp"
#include "valresp/nn/kernels.hpp"
#include "valresp/nn/model.hpp"
#include "valresp/nn/train.hpp"
#include "valresp/responder.hpp"
#include "valresp/saliency.hpp"
#include "valresp/text.hpp"

namespace valresp::pipeline {

enum class BaselineMode { Empirical, Uniform };

std::string_view to_string(BaselineMode m);
BaselineMode baseline_mode_from_string(std::string_view name);

struct PipelineConfig {
    std::uint64_t seed = 42;
    std::filesystem::path output_dir = "runs/experiment";

    // Corpus: dialogue files, or a synthesis spec when no paths are given.
    std::vector<std::filesystem::path> corpus_paths;
    std::optional<corpus::SynthesisConfig> synthesis;
    corpus::SpokenFilterConfig spoken_filter;

    text::TokenizerMode tokenizer = text::TokenizerMode::Character;
    int min_freq = 1;

    corpus::PhraseRuleSet rules;
    responder::EmotionLexicon lexicon = responder::EmotionLexicon::defaults();
    responder::NounHeuristic noun = responder::NounHeuristic::defaults();

    std::array<double, 3> timing_split{0.8, 0.1, 0.1};
    std::array<double, 3> emotion_split{0.6, 0.2, 0.2};

    // Shared encoder shape; vocab_size, num_classes and seed are filled in per task.
    nn::ModelConfig encoder;
    bool pretrain = true;
    double mask_rate = 0.15;
    nn::TrainConfig mlm_train;
    nn::TrainConfig timing_train = nn::TrainConfig::timing_defaults();
    nn::TrainConfig emotion_train = nn::TrainConfig::emotion_defaults();

    double threshold = 0.95;
    std::size_t top_k = 3;
    saliency::Aggregation aggregation = saliency::Aggregation::Signed;
    BaselineMode baseline = BaselineMode::Empirical;

    // Relative file references inside j resolve against base_dir.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void validate() const;  // ConfigError; checks referenced files exist

    // Per-purpose seeds, all derived from `seed`.
    std::uint64_t seed_for(std::string_view purpose) const;
};

// ---- data preparation -----------------------------------------------------------

struct PreparedData {
    std::vector<corpus::Dialogue> dialogues;
    corpus::Splits timing;
    corpus::Splits emotion;
};

std::vector<corpus::Dialogue> load_or_synthesize(const PipelineConfig& cfg);
PreparedData prepare_data(const PipelineConfig& cfg);
PreparedData prepare_data(const PipelineConfig& cfg, std::vector<corpus::Dialogue> dialogues);

// Vocabulary over the training contexts of both tasks.
text::Vocabulary build_vocabulary(const PreparedData& data, const PipelineConfig& cfg);

// Normalize, tokenize, encode and keep the last max_len tokens.
text::TokenSequence encode_text(std::string_view text, const text::Vocabulary& vocab, std::size_t max_len);

enum class Task { Timing, Emotion };
std::vector<nn::LabeledIds> encode_examples(std::span<const corpus::LabeledExample> examples, Task task,
                                            const text::Vocabulary& vocab, std::size_t max_len);

// ---- random baseline ------------------------------------------------------------------

std::vector<double> label_distribution(std::span<const int> labels, std::size_t num_classes);
std::vector<int> random_predictions(std::size_t n, std::span<const double> distribution, std::uint64_t seed);
metrics::MetricReport run_random_baseline(std::span<const int> labels, std::span<const double> distribution,
                                          std::uint64_t seed, std::optional<int> target_class = std::nullopt);

// ---- experiment -------------------------------------------------------------------------

struct CorpusStats {
    std::size_t dialogues = 0;
    std::size_t timing_examples = 0;
    double timing_positive_rate = 0.0;
    std::array<std::size_t, corpus::kNumEmotions> emotion_histogram{};
    std::array<std::size_t, 3> timing_split_sizes{};
    std::array<std::size_t, 3> emotion_split_sizes{};
    nlohmann::json to_json() const;
};

struct ExperimentReport {
    nlohmann::json config;
    CorpusStats stats;
    std::optional<nn::MlmResult> mlm;  // model dropped after fine-tuning starts
    metrics::MetricReport timing;
    metrics::MetricReport timing_baseline;
    metrics::MetricReport emotion;
    metrics::MetricReport emotion_baseline;
    nlohmann::json cause;       // accuracy, accuracy_correct_emotion, embed_score, bleu
    nlohmann::json generation;  // embed_score, bleu, branch counts
    nlohmann::json train_logs;
    nlohmann::json checkpoints;  // task -> {path, id}
    double seconds = 0.0;        // written to runtime.json, kept out of report.json

    // Deterministic metric block (no wall-clock fields).
    nlohmann::json metrics_json() const;
    nlohmann::json to_json() const;
};

ExperimentReport run_experiment(const PipelineConfig& cfg);

// Recomputes every metric in ExperimentReport::metrics_json() from a predictions file.
nlohmann::json metrics_from_predictions(const std::filesystem::path& predictions_path);

// ---- per-turn inference -------------------------------------------------------------------

struct Models {
    nn::Checkpoint timing;
    nn::Checkpoint emotion;
    corpus::PhraseRuleSet rules;
    responder::EmotionLexicon lexicon = responder::EmotionLexicon::defaults();
    responder::ResponderConfig responder;
    std::size_t top_k = 3;
    saliency::Aggregation aggregation = saliency::Aggregation::Signed;

    // DataError on task, class-count or vocabulary mismatch.
    void validate() const;
    static Models load(const std::filesystem::path& timing_ckpt, const std::filesystem::path& emotion_ckpt,
                       const PipelineConfig& cfg);
};

struct StageLatency {
    double timing = 0.0;
    double emotion = 0.0;
    double saliency = 0.0;
    double generation = 0.0;
};

struct TurnDecision {
    bool validate = false;
    double timing_confidence = 0.0;  // probability of the validating class
    std::optional<corpus::Emotion> emotion;
    std::optional<double> emotion_confidence;
    std::vector<saliency::CauseCandidate> causes;
    std::optional<std::string> response;
    std::optional<responder::Branch> branch;
    StageLatency latency_ms;

    nlohmann::json to_json() const;
};

// history holds earlier turns (user = A, system = B).
TurnDecision decide_turn(const Models& models, std::span<const corpus::Utterance> history, std::string_view user_text);

// Emotion, saliency and response for one utterance, without the timing gate.
struct EmotionAnalysis {
    nn::Prediction prediction;
    text::TokenSequence tokens;
    saliency::SaliencyResult saliency;
    std::vector<saliency::CauseCandidate> causes;
};

EmotionAnalysis analyze_emotion(const nn::Model& model, const text::Vocabulary& vocab, std::string_view utterance,
                                std::size_t top_k, saliency::Aggregation aggregation);

}  // namespace valresp::pipeline
