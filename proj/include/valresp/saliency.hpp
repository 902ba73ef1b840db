#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "valresp/nn/model.hpp"
#include "valresp/text.hpp"

namespace valresp::saliency {

enum class Aggregation { Signed, Absolute };

struct SaliencyResult {
    std::vector<double> scores;  // one per token
    nn::Tensor gradients;        // d logit_e / d embedding row, one row per token
    std::vector<int> ids;
    int predicted_class = 0;
};

// Gradient x input: score(i) = <E[id_i], d logit_e / d E[id_i]>. PAD positions score 0.
SaliencyResult token_scores(const nn::Model& model, std::span<const int> ids, int predicted_class,
                            Aggregation aggregation = Aggregation::Signed);

std::vector<SaliencyResult> token_scores_batch(const nn::Model& model, std::span<const std::vector<int>> inputs,
                                               std::span<const int> classes,
                                               Aggregation aggregation = Aggregation::Signed);
std::vector<SaliencyResult> token_scores_batch_serial(const nn::Model& model,
                                                      std::span<const std::vector<int>> inputs,
                                                      std::span<const int> classes,
                                                      Aggregation aggregation = Aggregation::Signed);

struct CauseCandidate {
    std::string phrase;                       // member token texts concatenated
    std::vector<std::size_t> token_indices;   // contiguous, ascending
    std::vector<std::string> tokens;
    double score = 0.0;                       // sum of member scores
    text::Span span;                          // byte span in the tokenized text
};

// The k highest-scoring non-reserved tokens (ties to the earlier position);
// adjacent selections merge into one candidate. Ordered by descending score.
std::vector<CauseCandidate> top_k_causes(const SaliencyResult& saliency, const text::TokenSequence& seq,
                                         std::size_t k);

// True iff some candidate phrase contains, or is contained in, the gold phrase
// after NFKC normalization and whitespace removal.
bool cause_match(std::span<const CauseCandidate> candidates, std::string_view gold);

std::string normalize_phrase(std::string_view phrase);

}  // namespace valresp::saliency
