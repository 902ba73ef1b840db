#include "valresp/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "valresp/error.hpp"
#include "valresp/unicode.hpp"

namespace valresp::saliency {

SaliencyResult token_scores(const nn::Model& model, std::span<const int> ids, int predicted_class,
                            Aggregation aggregation) {
    SaliencyResult r;
    r.gradients = model.input_embedding_gradient(ids, predicted_class);
    r.ids.assign(ids.begin(), ids.end());
    r.predicted_class = predicted_class;
    r.scores.assign(ids.size(), 0.0);
    const auto& emb = model.params().embedding;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == text::kPadId) continue;
        const double* e = emb.row(static_cast<std::size_t>(ids[i]));
        const double* g = r.gradients.row(i);
        double s = 0.0;
        for (std::size_t a = 0; a < emb.cols; ++a) s += e[a] * g[a];
        r.scores[i] = aggregation == Aggregation::Absolute ? std::abs(s) : s;
    }
    return r;
}

namespace {

void check_batch(std::span<const std::vector<int>> inputs, std::span<const int> classes) {
    if (inputs.size() != classes.size()) throw PreconditionError("saliency batch: inputs and classes differ in length");
}

}  // namespace

std::vector<SaliencyResult> token_scores_batch(const nn::Model& model, std::span<const std::vector<int>> inputs,
                                               std::span<const int> classes, Aggregation aggregation) {
    check_batch(inputs, classes);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        model.check_input(inputs[i]);
        if (classes[i] < 0 || static_cast<std::size_t>(classes[i]) >= model.config().num_classes) {
            throw PreconditionError("saliency batch: class out of range");
        }
    }
    std::vector<SaliencyResult> out(inputs.size());
    const auto n = static_cast<long>(inputs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        out[u] = token_scores(model, inputs[u], classes[u], aggregation);
    }
    return out;
}

std::vector<SaliencyResult> token_scores_batch_serial(const nn::Model& model,
                                                      std::span<const std::vector<int>> inputs,
                                                      std::span<const int> classes, Aggregation aggregation) {
    check_batch(inputs, classes);
    std::vector<SaliencyResult> out;
    out.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(token_scores(model, inputs[i], classes[i], aggregation));
    return out;
}

std::vector<CauseCandidate> top_k_causes(const SaliencyResult& sal, const text::TokenSequence& seq, std::size_t k) {
    if (k == 0) throw PreconditionError("top_k_causes: k must be >= 1");
    if (sal.scores.size() != seq.tokens.size()) {
        throw PreconditionError("top_k_causes: saliency and token sequence differ in length");
    }
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < sal.scores.size(); ++i) {
        const bool reserved = i < sal.ids.size() && text::is_reserved(sal.ids[i]);
        if (!reserved) eligible.push_back(i);
    }
    std::stable_sort(eligible.begin(), eligible.end(),
                     [&](std::size_t a, std::size_t b) { return sal.scores[a] > sal.scores[b]; });
    eligible.resize(std::min(k, eligible.size()));
    std::sort(eligible.begin(), eligible.end());

    std::vector<CauseCandidate> out;
    for (std::size_t i : eligible) {
        if (out.empty() || out.back().token_indices.back() + 1 != i) out.emplace_back();
        auto& c = out.back();
        c.token_indices.push_back(i);
        c.tokens.push_back(seq.tokens[i]);
        c.phrase += seq.tokens[i];
        c.score += sal.scores[i];
        if (c.token_indices.size() == 1) c.span.begin = seq.char_spans[i].begin;
        c.span.end = seq.char_spans[i].end;
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    return out;
}

std::string normalize_phrase(std::string_view phrase) { return unicode::strip_whitespace(unicode::nfkc(phrase)); }

bool cause_match(std::span<const CauseCandidate> candidates, std::string_view gold) {
    const std::string g = normalize_phrase(gold);
    if (g.empty()) throw PreconditionError("cause_match: gold phrase is empty");
    for (const auto& c : candidates) {
        const std::string p = normalize_phrase(c.phrase);
        if (p.empty()) continue;
        if (g.find(p) != std::string::npos || p.find(g) != std::string::npos) return true;
    }
    return false;
}

}  // namespace valresp::saliency
