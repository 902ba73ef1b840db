#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "valresp/nn/kernels.hpp"
#include "valresp/nn/model.hpp"
#include "valresp/rng.hpp"

namespace valresp::nn {

enum class SelectionMetric { MacroF1, MacroPrecision, TargetPrecision, Accuracy };

std::string_view to_string(SelectionMetric m);
SelectionMetric selection_metric_from_string(std::string_view name);

struct TrainConfig {
    double learning_rate = 1e-5;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 20;
    std::size_t max_steps = 0;  // 0: no step cap
    std::size_t eval_interval_steps = 100;
    double weight_decay = 0.01;
    std::size_t early_stop_patience = 5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    SelectionMetric selection_metric = SelectionMetric::MacroF1;
    int target_class = 1;  // used by TargetPrecision

    static TrainConfig timing_defaults();   // lr 1e-5
    static TrainConfig emotion_defaults();  // lr 3e-5

    void validate() const;
    nlohmann::json to_json() const;
    // Fields absent from j keep the values in base.
    static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
    static TrainConfig from_json(const nlohmann::json& j);
};

// Adam with decoupled weight decay; biases are not decayed.
class AdamW {
public:
    AdamW(const ModelParams& like, const TrainConfig& cfg);
    void step(ModelParams& params, const ModelParams& grads);
    std::size_t steps() const { return t_; }

private:
    TrainConfig cfg_;
    ModelParams m_;
    ModelParams v_;
    std::size_t t_ = 0;
};

// The PAD embedding row stays at zero through training.
void pin_padding_row(ModelParams& params);

struct EvalRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss = 0.0;  // mean training loss since the previous evaluation (0 at step 0)
    double selection = 0.0;
    nlohmann::json dev_metrics;
};

struct TrainLog {
    std::vector<EvalRecord> evaluations;
    std::size_t best_step = 0;
    double best_metric = 0.0;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t steps = 0;
    bool early_stopped = false;

    std::string to_jsonl() const;
    nlohmann::json summary() const;
};

struct DevScore {
    double selection = 0.0;
    // Mean dev cross-entropy; breaks ties on `selection` (lower wins).
    double loss = std::numeric_limits<double>::infinity();
    nlohmann::json metrics;
};

using DevEvaluator = std::function<DevScore(const Model&)>;

// Standard dev evaluator: predictions scored with classification_report.
DevEvaluator make_dev_evaluator(std::span<const LabeledIds> dev, const TrainConfig& cfg);

struct TrainResult {
    Model model;  // parameters at the best dev evaluation
    TrainLog log;
};

TrainResult train_classifier(Model init, std::span<const LabeledIds> train, std::span<const LabeledIds> dev,
                             const TrainConfig& cfg);
TrainResult train_classifier(Model init, std::span<const LabeledIds> train, const DevEvaluator& evaluate,
                             const TrainConfig& cfg);

// ---- masked-language-model pretraining ----

// Selects round(mask_rate * n) non-reserved positions; 80% -> MASK, 10% -> random
// non-reserved token, 10% unchanged.
MaskedSequence mask_sequence(std::span<const int> ids, double mask_rate, std::size_t vocab_size, Rng& rng);

struct MlmResult {
    Model model;  // num_classes == vocab_size; head is dropped by with_new_head()
    double initial_loss = 0.0;  // on a fixed evaluation masking of the corpus
    double final_loss = 0.0;    // same masking, after training
    std::vector<double> epoch_losses;
    std::size_t steps = 0;
};

// Builds a vocabulary-sized MLM model around the given encoder config.
Model make_mlm_model(ModelConfig encoder_config);

MlmResult pretrain_mlm(Model model, std::span<const std::vector<int>> corpus, const TrainConfig& cfg,
                       double mask_rate = 0.15);

// Mean masked-position loss of model on a fixed masking of corpus.
double mlm_eval_loss(const Model& model, std::span<const MaskedSequence> masked);

}  // namespace valresp::nn
