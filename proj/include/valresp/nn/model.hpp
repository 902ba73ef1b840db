#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace valresp::nn {

// Row-major dense matrix of doubles. Bias vectors are 1 x n.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
    bool operator==(const Tensor&) const = default;
};

enum class EncoderKind { MeanPool, SingleHeadAttention };

std::string_view to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(std::string_view name);

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 32;
    EncoderKind encoder = EncoderKind::SingleHeadAttention;
    std::size_t hidden_dim = 32;
    std::size_t num_classes = 2;
    std::size_t max_len = 128;
    std::uint64_t seed = 0;

    void validate() const;  // ConfigError on invalid dimensions
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    bool operator==(const ModelConfig&) const = default;
};

// Parameter set. The embedding table's rows are the per-token input vectors
// that saliency multiplies against their logit gradients; out_w holds one row
// per class.
//
// mean_pool:  logits = out_w * mean_i(E[id_i]) + out_b
// attention:  X_i = E[id_i] + P_i, H = X + softmax(QK^T/sqrt(d)) V,
//             logits = out_w * tanh(hidden_w * mean_i(H_i) + hidden_b) + out_b
struct ModelParams {
    Tensor embedding;  // vocab x embed
    Tensor position;   // max_len x embed (attention only)
    Tensor attn_q;     // embed x embed
    Tensor attn_k;
    Tensor attn_v;
    Tensor hidden_w;   // hidden x embed (attention only)
    Tensor hidden_b;   // 1 x hidden
    Tensor out_w;      // classes x (hidden | embed)
    Tensor out_b;      // 1 x classes

    // f(name, tensor, decays) for every allocated tensor, in a fixed order.
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    // Same shapes, all zero.
    ModelParams zeros_like() const;
    std::size_t parameter_count() const;
    bool operator==(const ModelParams&) const = default;

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        const auto go = [&f](const char* name, auto& t, bool decays) {
            if (!t.empty()) f(std::string_view(name), t, decays);
        };
        go("embedding", self.embedding, true);
        go("position", self.position, true);
        go("attn_q", self.attn_q, true);
        go("attn_k", self.attn_k, true);
        go("attn_v", self.attn_v, true);
        go("hidden_w", self.hidden_w, true);
        go("hidden_b", self.hidden_b, false);
        go("out_w", self.out_w, true);
        go("out_b", self.out_b, false);
    }
};

struct Prediction {
    int label = 0;
    double confidence = 0.0;
    std::vector<double> distribution;
    std::vector<double> logits;
};

// Numerically stable softmax; label is the lowest index among maxima.
Prediction prediction_from_logits(std::vector<double> logits);

// Activations kept for the backward pass.
struct ForwardCache {
    std::vector<int> ids;
    std::vector<char> valid;
    std::size_t n_valid = 0;
    Tensor x;       // L x d
    Tensor q, k, v;  // L x d
    Tensor attn;    // L x L, zero rows/cols at padding
    Tensor h;       // L x d encoder outputs
    std::vector<double> pooled;  // d
};

struct HeadCache {
    std::vector<double> input;
    std::vector<double> hidden;  // tanh activations (attention only)
    std::vector<double> logits;
};

class Model {
public:
    Model() = default;
    Model(ModelConfig config, ModelParams params);  // validates shapes and finiteness

    // Deterministic from config.seed; PAD row zero.
    static Model initialize(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const ModelParams& params() const { return params_; }
    ModelParams& mutable_params() { return params_; }

    Prediction predict(std::span<const int> ids) const;

    // Contextual token vectors (encoder outputs H), one row per position.
    Tensor token_vectors(std::span<const int> ids) const;

    // Row i = d(logit of class_index) / d(embedding row used at position i).
    Tensor input_embedding_gradient(std::span<const int> ids, int class_index) const;

    // ---- building blocks used by the training kernels ----
    void check_input(std::span<const int> ids) const;
    void encode(std::span<const int> ids, ForwardCache& cache) const;
    void head_forward(std::span<const double> input, HeadCache& cache) const;
    // Accumulates head parameter gradients (if grads) and returns d input.
    std::vector<double> head_backward(const HeadCache& cache, std::span<const double> dlogits,
                                      ModelParams* grads) const;
    // d_h: per-position gradients on H (may be empty); d_pooled: gradient on the pooled vector (may be empty).
    // Accumulates parameter gradients into grads (if non-null) and input gradients into dx (if non-null).
    void encoder_backward(const ForwardCache& cache, const Tensor* d_h, std::span<const double> d_pooled,
                          ModelParams* grads, Tensor* dx) const;

private:
    ModelConfig config_;
    ModelParams params_;
};

// Copies embedding and encoder weights into a fresh model with a new classification head.
Model with_new_head(const Model& encoder_source, std::size_t num_classes, std::uint64_t seed);

}  // namespace valresp::nn
