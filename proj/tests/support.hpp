#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "valresp/nn/kernels.hpp"
#include "valresp/nn/model.hpp"
#include "valresp/rng.hpp"
#include "valresp/text.hpp"

namespace testing {

inline std::filesystem::path config_dir() { return VALRESP_CONFIG_DIR; }

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("valresp-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline valresp::nn::Model random_model(valresp::nn::EncoderKind kind, std::size_t vocab, std::size_t classes,
                                       std::uint64_t seed, std::size_t embed = 6, std::size_t hidden = 5,
                                       std::size_t max_len = 12) {
    valresp::nn::ModelConfig cfg;
    cfg.vocab_size = vocab;
    cfg.embed_dim = embed;
    cfg.hidden_dim = hidden;
    cfg.encoder = kind;
    cfg.num_classes = classes;
    cfg.max_len = max_len;
    cfg.seed = seed;
    auto model = valresp::nn::Model::initialize(cfg);
    // Push weights away from the tiny init scale so every path carries signal.
    valresp::Rng rng(valresp::derive_seed(seed, 99));
    model.mutable_params().visit([&](std::string_view name, valresp::nn::Tensor& t, bool) {
        for (auto& v : t.data) v = rng.normal() * 0.5;
        if (name == "embedding") std::fill(t.row(0), t.row(0) + t.cols, 0.0);
    });
    return model;
}

// Non-reserved ids, optionally followed by PAD.
inline std::vector<int> random_ids(valresp::Rng& rng, std::size_t len, std::size_t vocab, std::size_t trailing_pad = 0) {
    std::vector<int> ids;
    for (std::size_t i = 0; i < len; ++i) {
        ids.push_back(valresp::text::kNumReserved + static_cast<int>(rng.below(vocab - valresp::text::kNumReserved)));
    }
    for (std::size_t i = 0; i < trailing_pad; ++i) ids.push_back(valresp::text::kPadId);
    return ids;
}

// Relative error with an absolute floor for near-zero gradients.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Mean cross-entropy computed from forward passes only.
inline double forward_loss(const valresp::nn::Model& model, const std::vector<valresp::nn::LabeledIds>& batch) {
    double total = 0.0;
    for (const auto& ex : batch) {
        const auto p = model.predict(ex.ids);
        total += -std::log(p.distribution[static_cast<std::size_t>(ex.label)]);
    }
    return total / static_cast<double>(batch.size());
}

// Largest relative error between analytic parameter gradients and central differences.
inline double max_gradient_error(const valresp::nn::Model& model, const std::vector<valresp::nn::LabeledIds>& batch,
                                 double h = 1e-4) {
    const auto idx = valresp::nn::iota_indices(batch.size());
    const auto analytic = valresp::nn::classification_loss_and_gradients_serial(model, batch, idx).gradients;
    std::vector<const valresp::nn::Tensor*> grads;
    analytic.visit([&](std::string_view, const valresp::nn::Tensor& t, bool) { grads.push_back(&t); });

    valresp::nn::Model probe = model;
    double worst = 0.0;
    std::size_t k = 0;
    probe.mutable_params().visit([&](std::string_view, valresp::nn::Tensor& t, bool) {
        const auto& g = *grads[k++];
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double saved = t.data[i];
            t.data[i] = saved + h;
            const double up = forward_loss(probe, batch);
            t.data[i] = saved - h;
            const double down = forward_loss(probe, batch);
            t.data[i] = saved;
            worst = std::max(worst, rel_error(g.data[i], (up - down) / (2.0 * h)));
        }
    });
    return worst;
}

}  // namespace testing
