#include "valresp/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "valresp/error.hpp"
#include "valresp/metrics.hpp"
#include "valresp/rng.hpp"
#include "valresp/text.hpp"

namespace valresp::nn {

std::string_view to_string(SelectionMetric m) {
    switch (m) {
        case SelectionMetric::MacroF1: return "macro_f1";
        case SelectionMetric::MacroPrecision: return "macro_precision";
        case SelectionMetric::TargetPrecision: return "target_precision";
        case SelectionMetric::Accuracy: return "accuracy";
    }
    return "macro_f1";
}

SelectionMetric selection_metric_from_string(std::string_view name) {
    if (name == "macro_f1") return SelectionMetric::MacroF1;
    if (name == "macro_precision") return SelectionMetric::MacroPrecision;
    if (name == "target_precision") return SelectionMetric::TargetPrecision;
    if (name == "accuracy") return SelectionMetric::Accuracy;
    throw ConfigError("unknown selection metric '" + std::string(name) + "'");
}

TrainConfig TrainConfig::timing_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::emotion_defaults() {
    TrainConfig c;
    c.learning_rate = 3e-5;
    return c;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (batch_size == 0 || eval_interval_steps == 0) throw ConfigError("batch_size and eval_interval_steps must be positive");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
        throw ConfigError("invalid optimizer moments");
    }
}

nlohmann::json TrainConfig::to_json() const {
    return {{"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"max_steps", max_steps},
            {"eval_interval_steps", eval_interval_steps},
            {"weight_decay", weight_decay},
            {"early_stop_patience", early_stop_patience},
            {"beta1", beta1},
            {"beta2", beta2},
            {"epsilon", epsilon},
            {"seed", seed},
            {"selection_metric", to_string(selection_metric)},
            {"target_class", target_class}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
    TrainConfig c = base;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.eval_interval_steps = j.value("eval_interval_steps", c.eval_interval_steps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    if (j.contains("selection_metric")) {
        c.selection_metric = selection_metric_from_string(j.at("selection_metric").get<std::string>());
    }
    c.target_class = j.value("target_class", c.target_class);
    c.validate();
    return c;
}

AdamW::AdamW(const ModelParams& like, const TrainConfig& cfg)
    : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {
    cfg_.validate();
}

void AdamW::step(ModelParams& params, const ModelParams& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::vector<const Tensor*> g;
    std::vector<Tensor*> m;
    std::vector<Tensor*> v;
    grads.visit([&](std::string_view, const Tensor& t, bool) { g.push_back(&t); });
    m_.visit([&](std::string_view, Tensor& t, bool) { m.push_back(&t); });
    v_.visit([&](std::string_view, Tensor& t, bool) { v.push_back(&t); });
    std::size_t k = 0;
    params.visit([&](std::string_view, Tensor& p, bool decays) {
        auto& gd = g.at(k)->data;
        auto& md = m.at(k)->data;
        auto& vd = v.at(k)->data;
        ++k;
        const double decay = decays ? cfg_.weight_decay : 0.0;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            md[i] = cfg_.beta1 * md[i] + (1.0 - cfg_.beta1) * gd[i];
            vd[i] = cfg_.beta2 * vd[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
            const double mhat = md[i] / bc1;
            const double vhat = vd[i] / bc2;
            p.data[i] -= cfg_.learning_rate * (mhat / (std::sqrt(vhat) + cfg_.epsilon) + decay * p.data[i]);
        }
    });
    pin_padding_row(params);
}

void pin_padding_row(ModelParams& params) {
    if (params.embedding.rows == 0) return;
    std::fill(params.embedding.row(text::kPadId), params.embedding.row(text::kPadId) + params.embedding.cols, 0.0);
}

std::string TrainLog::to_jsonl() const {
    std::string out;
    for (const auto& e : evaluations) {
        out += nlohmann::json{{"step", e.step},
                              {"epoch", e.epoch},
                              {"loss", e.loss},
                              {"selection", e.selection},
                              {"dev_metrics", e.dev_metrics}}
                   .dump();
        out += '\n';
    }
    return out;
}

nlohmann::json TrainLog::summary() const {
    return {{"evaluations", evaluations.size()},
            {"best_step", best_step},
            {"best_metric", best_metric},
            {"steps", steps},
            {"early_stopped", early_stopped}};
}

DevEvaluator make_dev_evaluator(std::span<const LabeledIds> dev, const TrainConfig& cfg) {
    return [dev, cfg](const Model& model) {
        std::vector<std::vector<int>> inputs;
        std::vector<int> labels;
        inputs.reserve(dev.size());
        for (const auto& ex : dev) {
            inputs.push_back(ex.ids);
            labels.push_back(ex.label);
        }
        const auto preds = predict_batch(model, inputs);
        std::vector<int> predicted;
        double ce = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            predicted.push_back(preds[i].label);
            ce -= std::log(std::max(preds[i].distribution[static_cast<std::size_t>(labels[i])], 1e-300));
        }
        const auto report = metrics::classification_report(labels, predicted, cfg.target_class);
        DevScore s;
        s.metrics = report.to_json();
        s.loss = ce / static_cast<double>(preds.size());
        s.metrics["loss"] = s.loss;
        switch (cfg.selection_metric) {
            case SelectionMetric::MacroF1: s.selection = report.macro_f1; break;
            case SelectionMetric::MacroPrecision: s.selection = report.macro_precision; break;
            case SelectionMetric::TargetPrecision: s.selection = report.target ? report.target->precision : 0.0; break;
            case SelectionMetric::Accuracy: s.selection = report.accuracy; break;
        }
        return s;
    };
}

TrainResult train_classifier(Model init, std::span<const LabeledIds> train, std::span<const LabeledIds> dev,
                             const TrainConfig& cfg) {
    if (dev.empty()) throw PreconditionError("dev split is empty");
    return train_classifier(std::move(init), train, make_dev_evaluator(dev, cfg), cfg);
}

TrainResult train_classifier(Model model, std::span<const LabeledIds> train, const DevEvaluator& evaluate,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw PreconditionError("train split is empty");

    TrainResult result{model, {}};
    TrainLog& log = result.log;
    AdamW optimizer(model.params(), cfg);
    Rng rng(cfg.seed);
    auto order = iota_indices(train.size());

    std::size_t step = 0;
    std::size_t epoch = 0;
    std::size_t since_best = 0;
    double loss_sum = 0.0;
    std::size_t loss_steps = 0;
    bool stop = false;

    const auto run_eval = [&]() {
        const DevScore score = evaluate(model);
        EvalRecord rec{step, epoch, loss_steps ? loss_sum / static_cast<double>(loss_steps) : 0.0, score.selection,
                       score.metrics};
        log.evaluations.push_back(std::move(rec));
        loss_sum = 0.0;
        loss_steps = 0;
        const bool better = score.selection > log.best_metric ||
                            (score.selection == log.best_metric && score.loss < log.best_loss);
        if (log.evaluations.size() == 1 || better) {
            log.best_metric = score.selection;
            log.best_loss = score.loss;
            log.best_step = step;
            result.model = model;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            log.early_stopped = true;
            stop = true;
        }
    };

    run_eval();
    while (!stop && epoch < cfg.max_epochs) {
        ++epoch;
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t begin = 0; begin < order.size() && !stop; begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const auto batch = std::span<const std::size_t>(order).subspan(begin, end - begin);
            const auto lg = classification_loss_and_gradients(model, train, batch);
            if (!std::isfinite(lg.loss)) {
                throw RuntimeError("non-finite training loss at step " + std::to_string(step + 1) + " (epoch " +
                                   std::to_string(epoch) + "); lower the learning rate");
            }
            optimizer.step(model.mutable_params(), lg.gradients);
            ++step;
            loss_sum += lg.loss;
            ++loss_steps;
            if (step % cfg.eval_interval_steps == 0) run_eval();
            if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
        }
        if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
    }
    if (!stop && log.evaluations.back().step != step) run_eval();
    log.steps = step;
    return result;
}

// ---- MLM ------------------------------------------------------------------------------

MaskedSequence mask_sequence(std::span<const int> ids, double mask_rate, std::size_t vocab_size, Rng& rng) {
    MaskedSequence m;
    m.input.assign(ids.begin(), ids.end());
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!text::is_reserved(ids[i])) candidates.push_back(i);
    }
    const auto count = static_cast<std::size_t>(std::lround(mask_rate * static_cast<double>(candidates.size())));
    // Partial Fisher-Yates: the first `count` slots become the selection.
    for (std::size_t k = 0; k < count; ++k) {
        const auto j = k + static_cast<std::size_t>(rng.below(candidates.size() - k));
        std::swap(candidates[k], candidates[j]);
    }
    candidates.resize(count);
    std::sort(candidates.begin(), candidates.end());
    const auto non_reserved = vocab_size - static_cast<std::size_t>(text::kNumReserved);
    for (std::size_t pos : candidates) {
        m.positions.push_back(pos);
        m.targets.push_back(ids[pos]);
        const double r = rng.uniform();
        if (r < 0.8) {
            m.input[pos] = text::kMaskId;
        } else if (r < 0.9 && non_reserved > 0) {
            m.input[pos] = text::kNumReserved + static_cast<int>(rng.below(non_reserved));
        }
    }
    return m;
}

Model make_mlm_model(ModelConfig cfg) {
    cfg.num_classes = cfg.vocab_size;
    return Model::initialize(cfg);
}

double mlm_eval_loss(const Model& model, std::span<const MaskedSequence> masked) {
    const auto all = iota_indices(masked.size());
    return mlm_loss_and_gradients(model, masked, all).loss;
}

MlmResult pretrain_mlm(Model model, std::span<const std::vector<int>> corpus, const TrainConfig& cfg,
                       double mask_rate) {
    cfg.validate();
    if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0,1)");
    if (corpus.empty() || corpus.size() < cfg.batch_size) {
        throw PreconditionError("MLM corpus (" + std::to_string(corpus.size()) + " sequences) is shorter than one batch");
    }
    if (model.config().num_classes != model.config().vocab_size) {
        throw ConfigError("MLM model needs a vocabulary-sized head");
    }
    const std::size_t vocab = model.config().vocab_size;

    Rng eval_rng(derive_seed(cfg.seed, 1));
    std::vector<MaskedSequence> eval_set;
    eval_set.reserve(corpus.size());
    for (const auto& ids : corpus) eval_set.push_back(mask_sequence(ids, mask_rate, vocab, eval_rng));

    MlmResult result;
    result.initial_loss = mlm_eval_loss(model, eval_set);

    AdamW optimizer(model.params(), cfg);
    Rng rng(derive_seed(cfg.seed, 2));
    auto order = iota_indices(corpus.size());
    std::vector<MaskedSequence> epoch_set(corpus.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = 0; i < corpus.size(); ++i) epoch_set[i] = mask_sequence(corpus[i], mask_rate, vocab, rng);
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        bool capped = false;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const auto batch = std::span<const std::size_t>(order).subspan(begin, end - begin);
            const auto lg = mlm_loss_and_gradients(model, epoch_set, batch);
            if (!std::isfinite(lg.loss)) throw RuntimeError("non-finite MLM loss at step " + std::to_string(step + 1));
            // No masked positions means no signal: skip the update entirely (weight decay included).
            if (lg.count > 0) {
                optimizer.step(model.mutable_params(), lg.gradients);
                loss_sum += lg.loss * static_cast<double>(lg.count);
                loss_count += lg.count;
            }
            ++step;
            if (cfg.max_steps != 0 && step >= cfg.max_steps) {
                capped = true;
                break;
            }
        }
        result.epoch_losses.push_back(loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0);
        if (capped) break;
    }
    result.steps = step;
    result.final_loss = mlm_eval_loss(model, eval_set);
    result.model = std::move(model);
    return result;
}

}  // namespace valresp::nn
