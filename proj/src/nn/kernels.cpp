#include "valresp/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "valresp/error.hpp"

namespace valresp::nn {

void add_in_place(ModelParams& dst, const ModelParams& src) {
    std::vector<const Tensor*> sources;
    src.visit([&](std::string_view, const Tensor& t, bool) { sources.push_back(&t); });
    std::size_t k = 0;
    dst.visit([&](std::string_view, Tensor& t, bool) {
        const auto& s = sources.at(k++)->data;
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += s[i];
    });
}

void scale_in_place(ModelParams& p, double factor) {
    p.visit([factor](std::string_view, Tensor& t, bool) {
        for (double& v : t.data) v *= factor;
    });
}

std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

namespace {

// Cross-entropy of one example; writes dlogits = softmax - onehot.
double cross_entropy(std::span<const double> logits, int label, std::vector<double>& dlogits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    dlogits.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
        dlogits[c] = std::exp(logits[c] - top);
        sum += dlogits[c];
    }
    for (double& v : dlogits) v /= sum;
    dlogits[static_cast<std::size_t>(label)] -= 1.0;
    return std::log(sum) + top - logits[static_cast<std::size_t>(label)];
}

void validate_classification(const Model& model, std::span<const LabeledIds> data, std::span<const std::size_t> batch) {
    if (batch.empty()) throw PreconditionError("empty batch");
    for (std::size_t idx : batch) {
        if (idx >= data.size()) throw PreconditionError("batch index out of range");
        const auto& ex = data[idx];
        if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= model.config().num_classes) {
            throw PreconditionError("label " + std::to_string(ex.label) + " out of range");
        }
        model.check_input(ex.ids);
    }
}

void validate_mlm(const Model& model, std::span<const MaskedSequence> data, std::span<const std::size_t> batch) {
    if (batch.empty()) throw PreconditionError("empty batch");
    for (std::size_t idx : batch) {
        if (idx >= data.size()) throw PreconditionError("batch index out of range");
        const auto& ex = data[idx];
        model.check_input(ex.input);
        if (ex.positions.size() != ex.targets.size()) throw PreconditionError("mask positions/targets mismatch");
        for (std::size_t k = 0; k < ex.positions.size(); ++k) {
            if (ex.positions[k] >= ex.input.size()) throw PreconditionError("mask position out of range");
            if (ex.targets[k] < 0 || static_cast<std::size_t>(ex.targets[k]) >= model.config().num_classes) {
                throw PreconditionError("mask target out of range");
            }
        }
    }
}

// Sum (not mean) of losses over data[batch[begin..end)), gradients accumulated into acc.
double accumulate_classification(const Model& model, std::span<const LabeledIds> data,
                                 std::span<const std::size_t> batch, std::size_t begin, std::size_t end,
                                 ModelParams& acc) {
    ForwardCache cache;
    HeadCache head;
    std::vector<double> dlogits;
    double loss = 0.0;
    for (std::size_t b = begin; b < end; ++b) {
        const auto& ex = data[batch[b]];
        model.encode(ex.ids, cache);
        model.head_forward(cache.pooled, head);
        loss += cross_entropy(head.logits, ex.label, dlogits);
        const auto d_pooled = model.head_backward(head, dlogits, &acc);
        model.encoder_backward(cache, nullptr, d_pooled, &acc, nullptr);
    }
    return loss;
}

double accumulate_mlm(const Model& model, std::span<const MaskedSequence> data, std::span<const std::size_t> batch,
                      std::size_t begin, std::size_t end, ModelParams& acc) {
    ForwardCache cache;
    HeadCache head;
    std::vector<double> dlogits;
    const std::size_t d = model.config().embed_dim;
    const bool attention = model.config().encoder == EncoderKind::SingleHeadAttention;
    double loss = 0.0;
    for (std::size_t b = begin; b < end; ++b) {
        const auto& ex = data[batch[b]];
        if (ex.positions.empty()) continue;
        model.encode(ex.input, cache);
        Tensor d_h(ex.input.size(), d);
        std::vector<double> d_pooled(d, 0.0);
        for (std::size_t m = 0; m < ex.positions.size(); ++m) {
            const std::size_t pos = ex.positions[m];
            // Mean-pool encoders have no per-position output; every position reads the pooled vector.
            const double* rep = attention ? cache.h.row(pos) : cache.pooled.data();
            model.head_forward(std::span<const double>(rep, d), head);
            loss += cross_entropy(head.logits, ex.targets[m], dlogits);
            const auto d_rep = model.head_backward(head, dlogits, &acc);
            double* dst = attention ? d_h.row(pos) : d_pooled.data();
            for (std::size_t a = 0; a < d; ++a) dst[a] += d_rep[a];
        }
        model.encoder_backward(cache, attention ? &d_h : nullptr, attention ? std::span<const double>() : d_pooled,
                               &acc, nullptr);
    }
    return loss;
}

std::size_t masked_count(std::span<const MaskedSequence> data, std::span<const std::size_t> batch) {
    std::size_t n = 0;
    for (std::size_t idx : batch) n += data[idx].positions.size();
    return n;
}

template <typename Accumulate>
LossAndGradients chunked(const Model& model, std::size_t batch_size, Accumulate&& accumulate) {
    std::vector<ModelParams> partial(kReductionChunks);
    std::vector<double> losses(kReductionChunks, 0.0);
    const auto chunks = static_cast<long>(kReductionChunks);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < chunks; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        const std::size_t begin = batch_size * cu / kReductionChunks;
        const std::size_t end = batch_size * (cu + 1) / kReductionChunks;
        partial[cu] = model.params().zeros_like();
        if (begin < end) losses[cu] = accumulate(begin, end, partial[cu]);
    }
    LossAndGradients out;
    out.gradients = std::move(partial[0]);
    out.loss = losses[0];
    for (std::size_t c = 1; c < kReductionChunks; ++c) {
        add_in_place(out.gradients, partial[c]);
        out.loss += losses[c];
    }
    return out;
}

void finish_mean(LossAndGradients& r, std::size_t count) {
    r.count = count;
    if (count == 0) return;
    const double inv = 1.0 / static_cast<double>(count);
    r.loss *= inv;
    scale_in_place(r.gradients, inv);
}

}  // namespace

LossAndGradients classification_loss_and_gradients(const Model& model, std::span<const LabeledIds> data,
                                                   std::span<const std::size_t> batch) {
    validate_classification(model, data, batch);
    auto r = chunked(model, batch.size(), [&](std::size_t begin, std::size_t end, ModelParams& acc) {
        return accumulate_classification(model, data, batch, begin, end, acc);
    });
    finish_mean(r, batch.size());
    return r;
}

LossAndGradients classification_loss_and_gradients_serial(const Model& model, std::span<const LabeledIds> data,
                                                          std::span<const std::size_t> batch) {
    validate_classification(model, data, batch);
    LossAndGradients r;
    r.gradients = model.params().zeros_like();
    r.loss = accumulate_classification(model, data, batch, 0, batch.size(), r.gradients);
    finish_mean(r, batch.size());
    return r;
}

LossAndGradients mlm_loss_and_gradients(const Model& model, std::span<const MaskedSequence> data,
                                        std::span<const std::size_t> batch) {
    validate_mlm(model, data, batch);
    auto r = chunked(model, batch.size(), [&](std::size_t begin, std::size_t end, ModelParams& acc) {
        return accumulate_mlm(model, data, batch, begin, end, acc);
    });
    finish_mean(r, masked_count(data, batch));
    return r;
}

LossAndGradients mlm_loss_and_gradients_serial(const Model& model, std::span<const MaskedSequence> data,
                                               std::span<const std::size_t> batch) {
    validate_mlm(model, data, batch);
    LossAndGradients r;
    r.gradients = model.params().zeros_like();
    r.loss = accumulate_mlm(model, data, batch, 0, batch.size(), r.gradients);
    finish_mean(r, masked_count(data, batch));
    return r;
}

std::vector<Prediction> predict_batch(const Model& model, std::span<const std::vector<int>> inputs) {
    for (const auto& ids : inputs) model.check_input(ids);
    std::vector<Prediction> out(inputs.size());
    const auto n = static_cast<long>(inputs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = model.predict(inputs[static_cast<std::size_t>(i)]);
    return out;
}

std::vector<Prediction> predict_batch_serial(const Model& model, std::span<const std::vector<int>> inputs) {
    std::vector<Prediction> out;
    out.reserve(inputs.size());
    for (const auto& ids : inputs) out.push_back(model.predict(ids));
    return out;
}

}  // namespace valresp::nn
