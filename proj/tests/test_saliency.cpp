#include <doctest.h>

#include <omp.h>

#include "support.hpp"
#include "valresp/error.hpp"
#include "valresp/saliency.hpp"

using namespace valresp;
using namespace valresp::saliency;

namespace {

// Class logit with the whole embedding table scaled by alpha.
double scaled_logit(nn::Model model, std::span<const int> ids, int cls, double alpha) {
    for (double& v : model.mutable_params().embedding.data) v *= alpha;
    return model.predict(ids).logits[static_cast<std::size_t>(cls)];
}

text::TokenSequence chars(const std::string& s) { return text::tokenize(s, text::TokenizerMode::Character); }

SaliencyResult fake_scores(std::vector<double> scores, std::vector<int> ids = {}) {
    SaliencyResult r;
    if (ids.empty()) ids.assign(scores.size(), text::kNumReserved);
    r.ids = std::move(ids);
    r.scores = std::move(scores);
    return r;
}

CauseCandidate candidate(std::string phrase) {
    CauseCandidate c;
    c.phrase = std::move(phrase);
    return c;
}

}  // namespace

TEST_CASE("zero embedding rows score zero") {
    auto m = testing::random_model(nn::EncoderKind::SingleHeadAttention, 12, 8, 3);
    std::fill(m.mutable_params().embedding.row(6), m.mutable_params().embedding.row(6) + 6, 0.0);
    const std::vector<int> ids = {4, 6, 5, text::kPadId};
    const auto r = token_scores(m, ids, 2);
    CHECK(r.scores[1] == 0.0);
    CHECK(r.scores[3] == 0.0);
    CHECK(r.scores[0] != 0.0);
    CHECK(r.gradients.rows == 4);
    CHECK(r.predicted_class == 2);
}

TEST_CASE("mean-pool saliency has the closed form") {
    const auto m = testing::random_model(nn::EncoderKind::MeanPool, 12, 8, 9);
    const std::vector<int> ids = {4, 8, 11, 5, text::kPadId};
    const int cls = 6;
    const auto r = token_scores(m, ids, cls);
    const auto& p = m.params();
    for (std::size_t i = 0; i < 4; ++i) {
        double dot = 0.0;
        for (std::size_t d = 0; d < p.embedding.cols; ++d) {
            dot += p.embedding(static_cast<std::size_t>(ids[i]), d) * p.out_w(cls, d);
        }
        CHECK(r.scores[i] == doctest::Approx(dot / 4.0).epsilon(1e-12));
    }
    CHECK(r.scores[4] == 0.0);
}

TEST_CASE("scores sum to the directional derivative under input scaling") {
    Rng rng(14);
    const double h = 1e-5;
    for (int t = 0; t < 30; ++t) {
        const auto kind = t % 2 ? nn::EncoderKind::SingleHeadAttention : nn::EncoderKind::MeanPool;
        const auto m = testing::random_model(kind, 16, 8, 300 + t);
        const auto ids = testing::random_ids(rng, 1 + rng.below(9), 16, rng.below(3));
        const int cls = m.predict(ids).label;
        const auto r = token_scores(m, ids, cls);
        double sum = 0.0;
        for (double s : r.scores) sum += s;
        const double numeric = (scaled_logit(m, ids, cls, 1 + h) - scaled_logit(m, ids, cls, 1 - h)) / (2 * h);
        CHECK(testing::rel_error(sum, numeric) < 1e-4);
    }
}

TEST_CASE("absolute aggregation") {
    const auto m = testing::random_model(nn::EncoderKind::SingleHeadAttention, 12, 8, 3);
    const std::vector<int> ids = {4, 5, 6, 7};
    const auto s = token_scores(m, ids, 1, Aggregation::Signed);
    const auto a = token_scores(m, ids, 1, Aggregation::Absolute);
    for (std::size_t i = 0; i < ids.size(); ++i) CHECK(a.scores[i] == std::abs(s.scores[i]));
}

TEST_CASE("batch saliency matches the serial reference") {
    Rng rng(6);
    const auto m = testing::random_model(nn::EncoderKind::SingleHeadAttention, 20, 8, 12);
    std::vector<std::vector<int>> inputs;
    std::vector<int> classes;
    for (int i = 0; i < 40; ++i) {
        inputs.push_back(testing::random_ids(rng, 1 + rng.below(10), 20, rng.below(2)));
        classes.push_back(static_cast<int>(rng.below(8)));
    }
    const auto serial = token_scores_batch_serial(m, inputs, classes);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(3);
    const auto par = token_scores_batch(m, inputs, classes);
    omp_set_num_threads(saved);
    REQUIRE(par.size() == serial.size());
    for (std::size_t i = 0; i < par.size(); ++i) CHECK(par[i].scores == serial[i].scores);
    classes.pop_back();
    CHECK_THROWS_AS(token_scores_batch(m, inputs, classes), PreconditionError);
}

TEST_CASE("top-k selection, merge and order") {
    const auto seq = chars("abc");

    SUBCASE("non-adjacent picks stay separate") {
        const auto c = top_k_causes(fake_scores({0.9, 0.1, 0.8}), seq, 2);
        REQUIRE(c.size() == 2);
        CHECK(c[0].token_indices == std::vector<std::size_t>{0});
        CHECK(c[1].token_indices == std::vector<std::size_t>{2});
        CHECK(c[0].phrase == "a");
        CHECK(c[1].phrase == "c");
    }
    SUBCASE("adjacent picks merge and scores add") {
        const auto c = top_k_causes(fake_scores({0.9, 0.8, 0.1}), seq, 2);
        REQUIRE(c.size() == 1);
        CHECK(c[0].token_indices == std::vector<std::size_t>{0, 1});
        CHECK(c[0].score == doctest::Approx(1.7).epsilon(1e-12));
        CHECK(c[0].phrase == "ab");
        CHECK(c[0].span.begin == 0);
        CHECK(c[0].span.end == 2);
    }
    SUBCASE("a gap filled by the third pick joins everything") {
        const auto c = top_k_causes(fake_scores({0.9, 0.1, 0.8}), seq, 3);
        REQUIRE(c.size() == 1);
        CHECK(c[0].token_indices == std::vector<std::size_t>{0, 1, 2});
        CHECK(c[0].score == doctest::Approx(1.8).epsilon(1e-12));
    }
    SUBCASE("k beyond length clamps and reserved tokens are skipped") {
        const auto c = top_k_causes(fake_scores({0.3, 0.9, 0.5}, {4, text::kSepId, 5}), seq, 10);
        REQUIRE(c.size() == 2);
        CHECK(c[0].phrase == "c");
        CHECK(c[1].phrase == "a");
    }
    SUBCASE("ties go to the earlier position") {
        const auto c = top_k_causes(fake_scores({0.5, 0.1, 0.5}), seq, 1);
        REQUIRE(c.size() == 1);
        CHECK(c[0].token_indices == std::vector<std::size_t>{0});
    }
    CHECK_THROWS_AS(top_k_causes(fake_scores({0.1, 0.2, 0.3}), seq, 0), PreconditionError);
    CHECK_THROWS_AS(top_k_causes(fake_scores({0.1, 0.2}), seq, 1), PreconditionError);
}

TEST_CASE("property: merged candidates are contiguous and spell their span") {
    Rng rng(31);
    const std::string source = "昨日 の 夜 に 大きな 蛾 が 部屋 に 出て きた";
    const auto seq = text::tokenize(source, text::TokenizerMode::Whitespace);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> scores;
        for (std::size_t i = 0; i < seq.size(); ++i) scores.push_back(rng.uniform(-1, 1));
        const auto k = 1 + rng.below(seq.size() + 2);
        const auto cands = top_k_causes(fake_scores(scores), seq, k);
        std::size_t covered = 0;
        for (std::size_t c = 0; c < cands.size(); ++c) {
            const auto& cand = cands[c];
            covered += cand.token_indices.size();
            for (std::size_t j = 1; j < cand.token_indices.size(); ++j) {
                CHECK(cand.token_indices[j] == cand.token_indices[j - 1] + 1);
            }
            std::string joined;
            for (auto i : cand.token_indices) joined += seq.tokens[i];
            CHECK(cand.phrase == joined);
            CHECK(unicode::strip_whitespace(source.substr(cand.span.begin, cand.span.end - cand.span.begin)) ==
                  joined);
            if (c > 0) CHECK(cands[c - 1].score >= cand.score);
        }
        CHECK(covered == std::min<std::size_t>(k, seq.size()));
    }
}

TEST_CASE("cause matching by containment") {
    const std::vector<CauseCandidate> moth = {candidate("蛾")};
    CHECK(cause_match(moth, "蛾"));
    const std::vector<CauseCandidate> disney = {candidate("ディズニー")};
    CHECK(cause_match(disney, "ディズニーランド"));
    const std::vector<CauseCandidate> weather = {candidate("天気")};
    CHECK_FALSE(cause_match(weather, "ゴキブリ"));
    const std::vector<CauseCandidate> longer = {candidate("大きな蛾が")};
    CHECK(cause_match(longer, "蛾"));
    const std::vector<CauseCandidate> width = {candidate("ﾃﾞｨｽﾞﾆｰ")};
    CHECK(cause_match(width, "ディズニー ランド"));
    CHECK_THROWS_AS(cause_match(moth, " "), PreconditionError);
    CHECK_FALSE(cause_match(std::vector<CauseCandidate>{}, "蛾"));
}
