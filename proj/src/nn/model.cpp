#include "valresp/nn/model.hpp"

#include <algorithm>
#include <cmath>

#include "valresp/error.hpp"
#include "valresp/rng.hpp"
#include "valresp/text.hpp"

namespace valresp::nn {

std::string_view to_string(EncoderKind kind) {
    return kind == EncoderKind::MeanPool ? "mean_pool" : "single_head_attention";
}

EncoderKind encoder_kind_from_string(std::string_view name) {
    if (name == "mean_pool") return EncoderKind::MeanPool;
    if (name == "single_head_attention") return EncoderKind::SingleHeadAttention;
    throw ConfigError("unknown encoder '" + std::string(name) + "' (expected mean_pool|single_head_attention)");
}

void ModelConfig::validate() const {
    if (vocab_size <= static_cast<std::size_t>(text::kNumReserved) - 1) {
        throw ConfigError("vocab_size must cover the reserved tokens");
    }
    if (embed_dim == 0 || hidden_dim == 0 || max_len == 0) throw ConfigError("model dimensions must be positive");
    if (num_classes != 2 && num_classes != 8 && num_classes != vocab_size) {
        throw ConfigError("num_classes must be 2, 8, or vocab_size (got " + std::to_string(num_classes) + ")");
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {{"vocab_size", vocab_size}, {"embed_dim", embed_dim},     {"encoder", to_string(encoder)},
            {"hidden_dim", hidden_dim}, {"num_classes", num_classes}, {"max_len", max_len},
            {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.encoder = encoder_kind_from_string(j.value("encoder", std::string(to_string(c.encoder))));
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.max_len = j.value("max_len", c.max_len);
    c.seed = j.value("seed", c.seed);
    return c;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z;
    const auto shape = [](const Tensor& t) { return Tensor(t.rows, t.cols); };
    z.embedding = shape(embedding);
    z.position = shape(position);
    z.attn_q = shape(attn_q);
    z.attn_k = shape(attn_k);
    z.attn_v = shape(attn_v);
    z.hidden_w = shape(hidden_w);
    z.hidden_b = shape(hidden_b);
    z.out_w = shape(out_w);
    z.out_b = shape(out_b);
    return z;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    visit([&n](std::string_view, const Tensor& t, bool) { n += t.size(); });
    return n;
}

Prediction prediction_from_logits(std::vector<double> logits) {
    Prediction p;
    const double top = *std::max_element(logits.begin(), logits.end());
    p.distribution.resize(logits.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        p.distribution[c] = std::exp(logits[c] - top);
        sum += p.distribution[c];
    }
    for (double& v : p.distribution) v /= sum;
    p.label = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    p.confidence = p.distribution[static_cast<std::size_t>(p.label)];
    p.logits = std::move(logits);
    return p;
}

namespace {

void fill_normal(Tensor& t, Rng& rng, double stddev) {
    for (double& v : t.data) v = rng.normal() * stddev;
}

void fill_xavier(Tensor& t, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
    for (double& v : t.data) v = rng.uniform(-a, a);
}

void check_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* name) {
    if (t.rows != rows || t.cols != cols || t.data.size() != rows * cols) {
        throw DataError(std::string("parameter '") + name + "' has shape " + std::to_string(t.rows) + "x" +
                        std::to_string(t.cols) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

// out[r] += sum_c m(r,c) * x[c]
void matvec_add(const Tensor& m, const double* x, double* out) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += mr[c] * x[c];
        out[r] += acc;
    }
}

// out[c] += sum_r m(r,c) * y[r]
void matvec_t_add(const Tensor& m, const double* y, double* out) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        const double yr = y[r];
        if (yr == 0.0) continue;
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += mr[c] * yr;
    }
}

// g(r,c) += y[r] * x[c]
void outer_add(Tensor& g, const double* y, const double* x) {
    for (std::size_t r = 0; r < g.rows; ++r) {
        const double yr = y[r];
        if (yr == 0.0) continue;
        double* gr = g.row(r);
        for (std::size_t c = 0; c < g.cols; ++c) gr[c] += yr * x[c];
    }
}

}  // namespace

Model::Model(ModelConfig config, ModelParams params) : config_(config), params_(std::move(params)) {
    config_.validate();
    const auto d = config_.embed_dim;
    check_shape(params_.embedding, config_.vocab_size, d, "embedding");
    if (config_.encoder == EncoderKind::SingleHeadAttention) {
        check_shape(params_.position, config_.max_len, d, "position");
        check_shape(params_.attn_q, d, d, "attn_q");
        check_shape(params_.attn_k, d, d, "attn_k");
        check_shape(params_.attn_v, d, d, "attn_v");
        check_shape(params_.hidden_w, config_.hidden_dim, d, "hidden_w");
        check_shape(params_.hidden_b, 1, config_.hidden_dim, "hidden_b");
        check_shape(params_.out_w, config_.num_classes, config_.hidden_dim, "out_w");
    } else {
        for (const Tensor* t : {&params_.position, &params_.attn_q, &params_.attn_k, &params_.attn_v,
                                &params_.hidden_w, &params_.hidden_b}) {
            if (!t->empty()) throw DataError("mean_pool model carries attention/hidden parameters");
        }
        check_shape(params_.out_w, config_.num_classes, d, "out_w");
    }
    check_shape(params_.out_b, 1, config_.num_classes, "out_b");
    params_.visit([](std::string_view name, const Tensor& t, bool) {
        for (double v : t.data) {
            if (!std::isfinite(v)) throw DataError("parameter '" + std::string(name) + "' has a non-finite entry");
        }
    });
}

Model Model::initialize(const ModelConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const auto d = config.embed_dim;
    ModelParams p;
    p.embedding = Tensor(config.vocab_size, d);
    fill_normal(p.embedding, rng, 0.1);
    std::fill(p.embedding.row(text::kPadId), p.embedding.row(text::kPadId) + d, 0.0);
    std::size_t head_in = d;
    if (config.encoder == EncoderKind::SingleHeadAttention) {
        p.position = Tensor(config.max_len, d);
        fill_normal(p.position, rng, 0.1);
        for (Tensor* t : {&p.attn_q, &p.attn_k, &p.attn_v}) {
            *t = Tensor(d, d);
            fill_xavier(*t, rng);
        }
        p.hidden_w = Tensor(config.hidden_dim, d);
        fill_xavier(p.hidden_w, rng);
        p.hidden_b = Tensor(1, config.hidden_dim);
        head_in = config.hidden_dim;
    }
    p.out_w = Tensor(config.num_classes, head_in);
    fill_xavier(p.out_w, rng);
    p.out_b = Tensor(1, config.num_classes);
    return Model(config, std::move(p));
}

void Model::check_input(std::span<const int> ids) const {
    if (ids.empty()) throw PreconditionError("model input is empty");
    if (ids.size() > config_.max_len) {
        throw PreconditionError("model input length " + std::to_string(ids.size()) + " exceeds max_len " +
                                std::to_string(config_.max_len));
    }
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
            throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                            std::to_string(config_.vocab_size));
        }
    }
}

void Model::encode(std::span<const int> ids, ForwardCache& c) const {
    check_input(ids);
    const std::size_t len = ids.size();
    const std::size_t d = config_.embed_dim;
    const bool attention = config_.encoder == EncoderKind::SingleHeadAttention;
    c.ids.assign(ids.begin(), ids.end());
    c.valid.assign(len, 0);
    c.n_valid = 0;
    c.x = Tensor(len, d);
    for (std::size_t i = 0; i < len; ++i) {
        if (ids[i] == text::kPadId) continue;
        c.valid[i] = 1;
        ++c.n_valid;
        const double* e = params_.embedding.row(static_cast<std::size_t>(ids[i]));
        double* xi = c.x.row(i);
        for (std::size_t a = 0; a < d; ++a) xi[a] = e[a];
        if (attention) {
            const double* pos = params_.position.row(i);
            for (std::size_t a = 0; a < d; ++a) xi[a] += pos[a];
        }
    }

    c.h = c.x;
    if (attention) {
        c.q = Tensor(len, d);
        c.k = Tensor(len, d);
        c.v = Tensor(len, d);
        for (std::size_t i = 0; i < len; ++i) {
            if (!c.valid[i]) continue;
            matvec_add(params_.attn_q, c.x.row(i), c.q.row(i));
            matvec_add(params_.attn_k, c.x.row(i), c.k.row(i));
            matvec_add(params_.attn_v, c.x.row(i), c.v.row(i));
        }
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        c.attn = Tensor(len, len);
        for (std::size_t i = 0; i < len; ++i) {
            if (!c.valid[i]) continue;
            double* a = c.attn.row(i);
            double top = -INFINITY;
            for (std::size_t j = 0; j < len; ++j) {
                if (!c.valid[j]) continue;
                const double* qi = c.q.row(i);
                const double* kj = c.k.row(j);
                double s = 0.0;
                for (std::size_t b = 0; b < d; ++b) s += qi[b] * kj[b];
                a[j] = s * scale;
                top = std::max(top, a[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                if (!c.valid[j]) continue;
                a[j] = std::exp(a[j] - top);
                sum += a[j];
            }
            double* hi = c.h.row(i);
            for (std::size_t j = 0; j < len; ++j) {
                if (!c.valid[j]) continue;
                a[j] /= sum;
                const double* vj = c.v.row(j);
                for (std::size_t b = 0; b < d; ++b) hi[b] += a[j] * vj[b];
            }
        }
    }

    c.pooled.assign(d, 0.0);
    if (c.n_valid > 0) {
        for (std::size_t i = 0; i < len; ++i) {
            if (!c.valid[i]) continue;
            const double* hi = c.h.row(i);
            for (std::size_t a = 0; a < d; ++a) c.pooled[a] += hi[a];
        }
        const double inv = 1.0 / static_cast<double>(c.n_valid);
        for (double& v : c.pooled) v *= inv;
    }
}

void Model::head_forward(std::span<const double> input, HeadCache& c) const {
    c.input.assign(input.begin(), input.end());
    const double* in = c.input.data();
    if (config_.encoder == EncoderKind::SingleHeadAttention) {
        c.hidden.assign(params_.hidden_b.data.begin(), params_.hidden_b.data.end());
        matvec_add(params_.hidden_w, in, c.hidden.data());
        for (double& v : c.hidden) v = std::tanh(v);
        in = c.hidden.data();
    } else {
        c.hidden.clear();
    }
    c.logits.assign(params_.out_b.data.begin(), params_.out_b.data.end());
    matvec_add(params_.out_w, in, c.logits.data());
}

std::vector<double> Model::head_backward(const HeadCache& c, std::span<const double> dlogits,
                                         ModelParams* grads) const {
    std::vector<double> d_in(c.input.size(), 0.0);
    if (config_.encoder == EncoderKind::SingleHeadAttention) {
        std::vector<double> du(c.hidden.size(), 0.0);
        matvec_t_add(params_.out_w, dlogits.data(), du.data());
        for (std::size_t r = 0; r < du.size(); ++r) du[r] *= 1.0 - c.hidden[r] * c.hidden[r];
        if (grads) {
            outer_add(grads->out_w, dlogits.data(), c.hidden.data());
            for (std::size_t r = 0; r < dlogits.size(); ++r) grads->out_b.data[r] += dlogits[r];
            outer_add(grads->hidden_w, du.data(), c.input.data());
            for (std::size_t r = 0; r < du.size(); ++r) grads->hidden_b.data[r] += du[r];
        }
        matvec_t_add(params_.hidden_w, du.data(), d_in.data());
    } else {
        if (grads) {
            outer_add(grads->out_w, dlogits.data(), c.input.data());
            for (std::size_t r = 0; r < dlogits.size(); ++r) grads->out_b.data[r] += dlogits[r];
        }
        matvec_t_add(params_.out_w, dlogits.data(), d_in.data());
    }
    return d_in;
}

void Model::encoder_backward(const ForwardCache& c, const Tensor* d_h, std::span<const double> d_pooled,
                             ModelParams* grads, Tensor* dx) const {
    const std::size_t len = c.ids.size();
    const std::size_t d = config_.embed_dim;
    Tensor dh(len, d);
    const double inv_n = c.n_valid > 0 ? 1.0 / static_cast<double>(c.n_valid) : 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        if (!c.valid[i]) continue;
        double* row = dh.row(i);
        if (d_h) {
            const double* src = d_h->row(i);
            for (std::size_t a = 0; a < d; ++a) row[a] = src[a];
        }
        if (!d_pooled.empty()) {
            for (std::size_t a = 0; a < d; ++a) row[a] += d_pooled[a] * inv_n;
        }
    }

    Tensor dxx = dh;  // residual path (and the whole story for mean_pool)
    if (config_.encoder == EncoderKind::SingleHeadAttention) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        Tensor dq(len, d), dk(len, d), dv(len, d);
        std::vector<double> da(len);
        for (std::size_t i = 0; i < len; ++i) {
            if (!c.valid[i]) continue;
            const double* doi = dh.row(i);
            const double* ai = c.attn.row(i);
            double weighted = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                if (!c.valid[j]) {
                    da[j] = 0.0;
                    continue;
                }
                const double* vj = c.v.row(j);
                double s = 0.0;
                for (std::size_t b = 0; b < d; ++b) s += doi[b] * vj[b];
                da[j] = s;
                weighted += ai[j] * s;
                double* dvj = dv.row(j);
                for (std::size_t b = 0; b < d; ++b) dvj[b] += ai[j] * doi[b];
            }
            double* dqi = dq.row(i);
            const double* qi = c.q.row(i);
            for (std::size_t j = 0; j < len; ++j) {
                if (!c.valid[j]) continue;
                const double ds = ai[j] * (da[j] - weighted) * scale;
                if (ds == 0.0) continue;
                const double* kj = c.k.row(j);
                double* dkj = dk.row(j);
                for (std::size_t b = 0; b < d; ++b) {
                    dqi[b] += ds * kj[b];
                    dkj[b] += ds * qi[b];
                }
            }
        }
        for (std::size_t i = 0; i < len; ++i) {
            if (!c.valid[i]) continue;
            double* dxi = dxx.row(i);
            matvec_t_add(params_.attn_q, dq.row(i), dxi);
            matvec_t_add(params_.attn_k, dk.row(i), dxi);
            matvec_t_add(params_.attn_v, dv.row(i), dxi);
            if (grads) {
                outer_add(grads->attn_q, dq.row(i), c.x.row(i));
                outer_add(grads->attn_k, dk.row(i), c.x.row(i));
                outer_add(grads->attn_v, dv.row(i), c.x.row(i));
            }
        }
    }

    if (grads) {
        for (std::size_t i = 0; i < len; ++i) {
            if (!c.valid[i]) continue;
            const double* src = dxx.row(i);
            double* ge = grads->embedding.row(static_cast<std::size_t>(c.ids[i]));
            for (std::size_t a = 0; a < d; ++a) ge[a] += src[a];
            if (config_.encoder == EncoderKind::SingleHeadAttention) {
                double* gp = grads->position.row(i);
                for (std::size_t a = 0; a < d; ++a) gp[a] += src[a];
            }
        }
    }
    if (dx) *dx = std::move(dxx);
}

Prediction Model::predict(std::span<const int> ids) const {
    ForwardCache cache;
    encode(ids, cache);
    HeadCache head;
    head_forward(cache.pooled, head);
    return prediction_from_logits(std::move(head.logits));
}

Tensor Model::token_vectors(std::span<const int> ids) const {
    ForwardCache cache;
    encode(ids, cache);
    return std::move(cache.h);
}

Tensor Model::input_embedding_gradient(std::span<const int> ids, int class_index) const {
    if (class_index < 0 || static_cast<std::size_t>(class_index) >= config_.num_classes) {
        throw PreconditionError("class index " + std::to_string(class_index) + " out of range");
    }
    ForwardCache cache;
    encode(ids, cache);
    HeadCache head;
    head_forward(cache.pooled, head);
    std::vector<double> onehot(config_.num_classes, 0.0);
    onehot[static_cast<std::size_t>(class_index)] = 1.0;
    const auto d_pooled = head_backward(head, onehot, nullptr);
    Tensor dx;
    encoder_backward(cache, nullptr, d_pooled, nullptr, &dx);
    return dx;
}

Model with_new_head(const Model& source, std::size_t num_classes, std::uint64_t seed) {
    ModelConfig cfg = source.config();
    cfg.num_classes = num_classes;
    cfg.seed = seed;
    Model fresh = Model::initialize(cfg);
    ModelParams p = fresh.params();
    const auto& src = source.params();
    p.embedding = src.embedding;
    p.position = src.position;
    p.attn_q = src.attn_q;
    p.attn_k = src.attn_k;
    p.attn_v = src.attn_v;
    return Model(cfg, std::move(p));
}

}  // namespace valresp::nn
