#include "valresp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace valresp::metrics {

ConfusionCounts confusion_counts(std::span<const int> labels, std::span<const int> predictions) {
    if (labels.size() != predictions.size()) throw PreconditionError("labels and predictions differ in length");
    if (labels.empty()) throw PreconditionError("empty label sequence");
    ConfusionCounts cc;
    cc.total = labels.size();
    std::set<int> classes(labels.begin(), labels.end());
    classes.insert(predictions.begin(), predictions.end());
    for (int c : classes) cc.per_class[c];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int gold = labels[i];
        const int pred = predictions[i];
        for (auto& [c, counts] : cc.per_class) {
            if (gold == c && pred == c) {
                ++counts.tp;
            } else if (pred == c) {
                ++counts.fp;
            } else if (gold == c) {
                ++counts.fn;
            } else {
                ++counts.tn;
            }
        }
    }
    return cc;
}

namespace {

ClassMetrics metrics_for(int label, const ClassCounts& c) {
    ClassMetrics m;
    m.label = label;
    m.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    m.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    m.support = c.tp + c.fn;
    return m;
}

nlohmann::json class_json(const ClassMetrics& m) {
    return {{"label", m.label}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

}  // namespace

MetricReport classification_report(std::span<const int> labels, std::span<const int> predictions,
                                   std::optional<int> target_class) {
    const auto cc = confusion_counts(labels, predictions);
    MetricReport r;
    r.total = cc.total;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += labels[i] == predictions[i] ? 1 : 0;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(cc.total);
    std::size_t gold_classes = 0;
    for (const auto& [label, counts] : cc.per_class) {
        const auto m = metrics_for(label, counts);
        r.per_class.push_back(m);
        if (m.support == 0) continue;
        ++gold_classes;
        r.macro_precision += m.precision;
        r.macro_recall += m.recall;
        r.macro_f1 += m.f1;
    }
    r.macro_precision /= static_cast<double>(gold_classes);
    r.macro_recall /= static_cast<double>(gold_classes);
    r.macro_f1 /= static_cast<double>(gold_classes);
    if (target_class) {
        const auto it = cc.per_class.find(*target_class);
        r.target = it == cc.per_class.end() ? ClassMetrics{*target_class, 0.0, 0.0, 0.0, 0}
                                            : metrics_for(*target_class, it->second);
    }
    return r;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& m : per_class) per.push_back(class_json(m));
    nlohmann::json j = {{"macro", {{"precision", macro_precision}, {"recall", macro_recall}, {"f1", macro_f1}}},
                        {"accuracy", accuracy},
                        {"total", total},
                        {"per_class", per}};
    if (target) j["target"] = class_json(*target);
    return j;
}

// ---- BLEU ---------------------------------------------------------------------------

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(std::span<const std::string> tokens, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

}  // namespace

NgramPrecision modified_precision(std::span<const std::string> candidate, std::span<const std::string> reference,
                                  std::size_t n) {
    NgramPrecision p;
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    for (const auto& [gram, count] : cand) {
        p.candidate_ngrams += count;
        const auto it = ref.find(gram);
        if (it != ref.end()) p.clipped_matches += std::min(count, it->second);
    }
    return p;
}

double bleu(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t max_n,
            double epsilon) {
    if (reference.empty()) throw PreconditionError("BLEU reference is empty");
    if (max_n == 0) throw PreconditionError("BLEU max_n must be positive");
    if (candidate.empty()) return 0.0;
    double log_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto p = modified_precision(candidate, reference, n);
        if (p.candidate_ngrams == 0 && reference.size() < n) continue;
        const double value = p.clipped_matches == 0 ? epsilon : p.value();
        log_sum += std::log(value);
        ++orders;
    }
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(reference.size());
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / static_cast<double>(orders));
}

// ---- embedding similarity -------------------------------------------------------------

namespace {

std::vector<double> row_norms(const nn::Tensor& t, const char* side) {
    std::vector<double> norms(t.rows);
    for (std::size_t i = 0; i < t.rows; ++i) {
        double s = 0.0;
        for (std::size_t a = 0; a < t.cols; ++a) s += t(i, a) * t(i, a);
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0) {
            throw PreconditionError(std::string("zero-norm token vector at ") + side + " position " + std::to_string(i));
        }
    }
    return norms;
}

}  // namespace

EmbedScore embed_score_vectors(const nn::Tensor& candidate, const nn::Tensor& reference) {
    if (candidate.rows == 0 || reference.rows == 0) throw PreconditionError("embed_score needs non-empty sequences");
    if (candidate.cols != reference.cols) throw PreconditionError("embed_score vector dimensions differ");
    const auto nc = row_norms(candidate, "candidate");
    const auto nr = row_norms(reference, "reference");
    nn::Tensor sim(candidate.rows, reference.rows);
    for (std::size_t i = 0; i < candidate.rows; ++i) {
        for (std::size_t j = 0; j < reference.rows; ++j) {
            double dot = 0.0;
            for (std::size_t a = 0; a < candidate.cols; ++a) dot += candidate(i, a) * reference(j, a);
            sim(i, j) = std::clamp(dot / (nc[i] * nr[j]), -1.0, 1.0);
        }
    }
    EmbedScore s;
    for (std::size_t i = 0; i < candidate.rows; ++i) {
        double best = -1.0;
        for (std::size_t j = 0; j < reference.rows; ++j) best = std::max(best, sim(i, j));
        s.precision += best;
    }
    for (std::size_t j = 0; j < reference.rows; ++j) {
        double best = -1.0;
        for (std::size_t i = 0; i < candidate.rows; ++i) best = std::max(best, sim(i, j));
        s.recall += best;
    }
    s.precision /= static_cast<double>(candidate.rows);
    s.recall /= static_cast<double>(reference.rows);
    s.f1 = f1_score(s.precision, s.recall);
    return s;
}

EmbedScore embed_score(const nn::Model& model, const text::Vocabulary& vocab,
                       std::span<const std::string> candidate_tokens, std::span<const std::string> reference_tokens) {
    const auto vectors = [&](std::span<const std::string> tokens, const char* side) {
        if (tokens.empty()) throw PreconditionError(std::string("embed_score: empty ") + side);
        text::TokenSequence seq;
        seq.tokens.assign(tokens.begin(), tokens.end());
        auto ids = text::truncate_front(text::encode(seq, vocab), model.config().max_len);
        const std::size_t offset = tokens.size() - ids.size();
        auto h = model.token_vectors(ids);
        for (std::size_t i = 0; i < h.rows; ++i) {
            double s = 0.0;
            for (std::size_t a = 0; a < h.cols; ++a) s += h(i, a) * h(i, a);
            if (s == 0.0) {
                throw PreconditionError(std::string("zero-norm vector for ") + side + " token '" +
                                        tokens[offset + i] + "'");
            }
        }
        return h;
    };
    return embed_score_vectors(vectors(candidate_tokens, "candidate"), vectors(reference_tokens, "reference"));
}

double cause_accuracy(std::span<const bool> matches) {
    if (matches.empty()) throw PreconditionError("cause accuracy over an empty set");
    const auto hits = std::count(matches.begin(), matches.end(), true);
    return static_cast<double>(hits) / static_cast<double>(matches.size());
}

}  // namespace valresp::metrics
