#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "valresp/nn/model.hpp"

// Batch kernels. Each has an OpenMP version used by training/evaluation and a
// plain serial reference used by tests and the benchmark. The parallel
// gradient kernels split the batch into a fixed number of chunks and reduce
// them in chunk order, so results do not depend on the thread count.
namespace valresp::nn {

struct LabeledIds {
    std::vector<int> ids;
    int label = 0;
};

// An MLM training instance: corrupted input plus (position, original id) targets.
struct MaskedSequence {
    std::vector<int> input;
    std::vector<std::size_t> positions;
    std::vector<int> targets;
};

struct LossAndGradients {
    double loss = 0.0;       // mean over examples (classification) or masked positions (MLM)
    std::size_t count = 0;   // examples or masked positions contributing
    ModelParams gradients;
};

inline constexpr std::size_t kReductionChunks = 8;

void add_in_place(ModelParams& dst, const ModelParams& src);
void scale_in_place(ModelParams& p, double factor);

// Mean cross-entropy over data[batch[i]].
LossAndGradients classification_loss_and_gradients(const Model& model, std::span<const LabeledIds> data,
                                                   std::span<const std::size_t> batch);
LossAndGradients classification_loss_and_gradients_serial(const Model& model, std::span<const LabeledIds> data,
                                                          std::span<const std::size_t> batch);

// Mean cross-entropy over every masked position in the batch. A batch with no
// masked position yields loss 0, count 0 and zero gradients.
LossAndGradients mlm_loss_and_gradients(const Model& model, std::span<const MaskedSequence> data,
                                        std::span<const std::size_t> batch);
LossAndGradients mlm_loss_and_gradients_serial(const Model& model, std::span<const MaskedSequence> data,
                                               std::span<const std::size_t> batch);

std::vector<Prediction> predict_batch(const Model& model, std::span<const std::vector<int>> inputs);
std::vector<Prediction> predict_batch_serial(const Model& model, std::span<const std::vector<int>> inputs);

// All indices [0, n).
std::vector<std::size_t> iota_indices(std::size_t n);

}  // namespace valresp::nn
