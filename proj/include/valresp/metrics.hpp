#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "valresp/error.hpp"
#include "valresp/nn/model.hpp"
#include "valresp/text.hpp"

namespace valresp::metrics {

struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
};

struct ConfusionCounts {
    std::map<int, ClassCounts> per_class;  // every class seen in labels or predictions
    std::size_t total = 0;
};

ConfusionCounts confusion_counts(std::span<const int> labels, std::span<const int> predictions);

struct ClassMetrics {
    int label = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;  // gold occurrences
};

struct MetricReport {
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    std::optional<ClassMetrics> target;
    std::size_t total = 0;

    nlohmann::json to_json() const;
};

// Macro averages run over classes present in the gold labels. Zero
// denominators yield 0 rather than an error.
MetricReport classification_report(std::span<const int> labels, std::span<const int> predictions,
                                   std::optional<int> target_class = std::nullopt);

inline double f1_score(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

// ---- BLEU -------------------------------------------------------------------------

struct NgramPrecision {
    std::size_t clipped_matches = 0;
    std::size_t candidate_ngrams = 0;
    double value() const {
        return candidate_ngrams == 0 ? 0.0 : static_cast<double>(clipped_matches) / static_cast<double>(candidate_ngrams);
    }
};

NgramPrecision modified_precision(std::span<const std::string> candidate, std::span<const std::string> reference,
                                  std::size_t n);

// Sentence-level BLEU with additive epsilon smoothing on zero precisions.
// Orders for which neither side has any n-gram are left out of the mean.
double bleu(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t max_n = 4,
            double epsilon = 1e-9);

// ---- Cohen's kappa -----------------------------------------------------------------

template <typename T>
double cohen_kappa(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw PreconditionError("kappa: rating sequences differ in length");
    if (a.empty()) throw PreconditionError("kappa: empty rating sequences");
    std::map<T, double> marg_a;
    std::map<T, double> marg_b;
    double agree = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        marg_a[a[i]] += 1.0;
        marg_b[b[i]] += 1.0;
        if (a[i] == b[i]) agree += 1.0;
    }
    const double n = static_cast<double>(a.size());
    const double p_o = agree / n;
    double p_e = 0.0;
    for (const auto& [cat, count] : marg_a) {
        const auto it = marg_b.find(cat);
        if (it != marg_b.end()) p_e += (count / n) * (it->second / n);
    }
    if (p_e == 1.0) {
        if (p_o == 1.0) return 1.0;
        throw PreconditionError("kappa undefined: chance agreement is 1 but raters disagree");
    }
    return (p_o - p_e) / (1.0 - p_e);
}

template <typename T>
double cohen_kappa(const std::vector<T>& a, const std::vector<T>& b) {
    return cohen_kappa(std::span<const T>(a), std::span<const T>(b));
}

// ---- embedding similarity (stand-in for BERTScore) ------------------------------------

struct EmbedScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Greedy cosine matching between token vector rows.
EmbedScore embed_score_vectors(const nn::Tensor& candidate, const nn::Tensor& reference);

// Uses the model's contextual encoder outputs as token vectors.
EmbedScore embed_score(const nn::Model& model, const text::Vocabulary& vocab,
                       std::span<const std::string> candidate_tokens, std::span<const std::string> reference_tokens);

double cause_accuracy(std::span<const bool> matches);

}  // namespace valresp::metrics
