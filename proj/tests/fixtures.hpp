#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "support.hpp"
#include "valresp/pipeline.hpp"

namespace testing {

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Zero weights and a single large bias: the prediction is fixed regardless of input.
inline valresp::nn::Model biased_model(std::size_t vocab, std::size_t classes, int favoured) {
    auto m = random_model(valresp::nn::EncoderKind::MeanPool, vocab, classes, 5, 6, 5, 32);
    auto& p = m.mutable_params();
    std::fill(p.out_w.data.begin(), p.out_w.data.end(), 0.0);
    std::fill(p.out_b.data.begin(), p.out_b.data.end(), 0.0);
    p.out_b.data[static_cast<std::size_t>(favoured)] = 40.0;
    return m;
}

inline valresp::text::Vocabulary fixture_vocab() {
    using namespace valresp::text;
    std::vector<TokenSequence> seqs = {
        tokenize("昨日蛾が出て怖かった明日は晴れるらしい" + std::string(kTurnSeparator), TokenizerMode::Character)};
    return Vocabulary::build(seqs, 1, TokenizerMode::Character);
}

inline valresp::pipeline::Models assemble(valresp::nn::Model timing, valresp::nn::Model emotion,
                                          const valresp::text::Vocabulary& vocab) {
    valresp::pipeline::Models m{{"timing", std::move(timing), vocab},
                                {"emotion", std::move(emotion), vocab},
                                valresp::corpus::PhraseRuleSet::load(config_dir() / "rules.json"),
                                valresp::responder::EmotionLexicon::defaults(),
                                valresp::responder::ResponderConfig{},
                                3,
                                valresp::saliency::Aggregation::Signed};
    m.validate();
    return m;
}

// Timing and emotion outputs pinned by bias.
inline valresp::pipeline::Models fixed_models(bool validate, valresp::corpus::Emotion emotion) {
    const auto vocab = fixture_vocab();
    return assemble(biased_model(vocab.size(), 2, validate ? 1 : 0),
                    biased_model(vocab.size(), valresp::corpus::kNumEmotions, valresp::corpus::index_of(emotion)),
                    vocab);
}

// Input-dependent decisions from random attention weights.
inline valresp::pipeline::Models random_models(std::uint64_t seed) {
    const auto vocab = fixture_vocab();
    return assemble(random_model(valresp::nn::EncoderKind::SingleHeadAttention, vocab.size(), 2, seed, 6, 5, 64),
                    random_model(valresp::nn::EncoderKind::SingleHeadAttention, vocab.size(),
                                 valresp::corpus::kNumEmotions, seed + 1, 6, 5, 64),
                    vocab);
}

}  // namespace testing
