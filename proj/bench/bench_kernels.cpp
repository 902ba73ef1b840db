// Serial reference vs OpenMP kernels at the synthetic-pipeline model size.
#include <benchmark/benchmark.h>

#include <vector>

#include "valresp/nn/kernels.hpp"
#include "valresp/nn/model.hpp"
#include "valresp/nn/train.hpp"
#include "valresp/rng.hpp"
#include "valresp/saliency.hpp"
#include "valresp/text.hpp"

using namespace valresp;

namespace {

constexpr std::size_t kVocab = 400;
constexpr std::size_t kLen = 48;

nn::Model bench_model(nn::EncoderKind kind, std::size_t classes) {
    nn::ModelConfig cfg;
    cfg.vocab_size = kVocab;
    cfg.embed_dim = 24;
    cfg.hidden_dim = 24;
    cfg.max_len = 64;
    cfg.num_classes = classes;
    cfg.encoder = kind;
    cfg.seed = 3;
    return nn::Model::initialize(cfg);
}

std::vector<int> random_ids(Rng& rng) {
    std::vector<int> ids(kLen);
    for (auto& id : ids) id = text::kNumReserved + static_cast<int>(rng.below(kVocab - text::kNumReserved));
    return ids;
}

std::vector<nn::LabeledIds> labeled(std::size_t n) {
    Rng rng(1);
    std::vector<nn::LabeledIds> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({random_ids(rng), static_cast<int>(rng.below(8))});
    return out;
}

std::vector<std::vector<int>> inputs(std::size_t n) {
    Rng rng(2);
    std::vector<std::vector<int>> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(random_ids(rng));
    return out;
}

template <bool Parallel>
void BM_ClassifierGradients(benchmark::State& state) {
    const auto model = bench_model(nn::EncoderKind::SingleHeadAttention, 8);
    const auto data = labeled(static_cast<std::size_t>(state.range(0)));
    const auto batch = nn::iota_indices(data.size());
    for (auto _ : state) {
        auto r = Parallel ? nn::classification_loss_and_gradients(model, data, batch)
                          : nn::classification_loss_and_gradients_serial(model, data, batch);
        benchmark::DoNotOptimize(r.loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_MlmGradients(benchmark::State& state) {
    const auto model = nn::make_mlm_model(bench_model(nn::EncoderKind::SingleHeadAttention, 2).config());
    Rng rng(4);
    std::vector<nn::MaskedSequence> data;
    for (const auto& ids : inputs(static_cast<std::size_t>(state.range(0)))) {
        data.push_back(nn::mask_sequence(ids, 0.15, kVocab, rng));
    }
    const auto batch = nn::iota_indices(data.size());
    for (auto _ : state) {
        auto r = Parallel ? nn::mlm_loss_and_gradients(model, data, batch)
                          : nn::mlm_loss_and_gradients_serial(model, data, batch);
        benchmark::DoNotOptimize(r.loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Predict(benchmark::State& state) {
    const auto model = bench_model(nn::EncoderKind::SingleHeadAttention, 2);
    const auto xs = inputs(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        auto r = Parallel ? nn::predict_batch(model, xs) : nn::predict_batch_serial(model, xs);
        benchmark::DoNotOptimize(r.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Saliency(benchmark::State& state) {
    const auto model = bench_model(nn::EncoderKind::SingleHeadAttention, 8);
    const auto xs = inputs(static_cast<std::size_t>(state.range(0)));
    const std::vector<int> classes(xs.size(), 3);
    for (auto _ : state) {
        auto r = Parallel ? saliency::token_scores_batch(model, xs, classes)
                          : saliency::token_scores_batch_serial(model, xs, classes);
        benchmark::DoNotOptimize(r.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_ClassifierGradients<false>)->Name("gradients/serial")->Arg(32)->Arg(256)->UseRealTime();
BENCHMARK(BM_ClassifierGradients<true>)->Name("gradients/openmp")->Arg(32)->Arg(256)->UseRealTime();
BENCHMARK(BM_MlmGradients<false>)->Name("mlm_gradients/serial")->Arg(32)->Arg(256)->UseRealTime();
BENCHMARK(BM_MlmGradients<true>)->Name("mlm_gradients/openmp")->Arg(32)->Arg(256)->UseRealTime();
BENCHMARK(BM_Predict<false>)->Name("predict/serial")->Arg(256)->Arg(1024)->UseRealTime();
BENCHMARK(BM_Predict<true>)->Name("predict/openmp")->Arg(256)->Arg(1024)->UseRealTime();
BENCHMARK(BM_Saliency<false>)->Name("saliency/serial")->Arg(256)->UseRealTime();
BENCHMARK(BM_Saliency<true>)->Name("saliency/openmp")->Arg(256)->UseRealTime();

BENCHMARK_MAIN();
