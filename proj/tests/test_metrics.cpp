#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "valresp/error.hpp"
#include "valresp/metrics.hpp"

using namespace valresp;
using namespace valresp::metrics;

namespace {

std::vector<std::string> words(const std::string& s) {
    return text::tokenize(s, text::TokenizerMode::Whitespace).tokens;
}

nn::Tensor rows(std::vector<std::vector<double>> data) {
    nn::Tensor t(data.size(), data.at(0).size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data[i].size(); ++j) t(i, j) = data[i][j];
    }
    return t;
}

// Hand-rolled per-class F1 from explicit counting.
double class_f1(const std::vector<int>& y, const std::vector<int>& p, int cls) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        tp += (p[i] == cls && y[i] == cls);
        fp += (p[i] == cls && y[i] != cls);
        fn += (p[i] != cls && y[i] == cls);
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    return prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
}

}  // namespace

TEST_CASE("perfect predictor") {
    const std::vector<int> y = {0, 1, 2, 1, 0};
    const auto r = classification_report(y, y, 1);
    CHECK(r.macro_f1 == 1.0);
    CHECK(r.macro_precision == 1.0);
    CHECK(r.macro_recall == 1.0);
    CHECK(r.accuracy == 1.0);
    REQUIRE(r.target.has_value());
    CHECK(r.target->f1 == 1.0);
}

TEST_CASE("hand-computed binary case") {
    const std::vector<int> y = {1, 1, 0, 0};
    const std::vector<int> p = {1, 0, 0, 0};
    const auto r = classification_report(y, p, 1);
    CHECK(std::abs(r.target->f1 - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(r.per_class[0].f1 - 0.8) < 1e-12);
    CHECK(std::abs(r.macro_f1 - 0.7333333333333333) < 1e-9);
    CHECK(r.accuracy == 0.75);
    CHECK(r.target->precision == 1.0);
    CHECK(r.target->recall == 0.5);
}

TEST_CASE("never predicting the target class gives zero precision") {
    const std::vector<int> y = {1, 0, 0, 1};
    const std::vector<int> p = {0, 0, 0, 0};
    const auto r = classification_report(y, p, 1);
    CHECK(r.target->precision == 0.0);
    CHECK(r.target->f1 == 0.0);
    CHECK_THROWS_AS(classification_report(std::vector<int>{1}, std::vector<int>{1, 0}), PreconditionError);
    CHECK_THROWS_AS(classification_report(std::vector<int>{}, std::vector<int>{}), PreconditionError);
}

TEST_CASE("macro averages run over gold classes only") {
    const std::vector<int> y = {0, 0, 1, 1};
    const std::vector<int> p = {0, 2, 1, 1};  // class 2 never occurs in gold
    const auto r = classification_report(y, p);
    const double expect = (class_f1(y, p, 0) + class_f1(y, p, 1)) / 2.0;
    CHECK(std::abs(r.macro_f1 - expect) < 1e-12);
}

TEST_CASE("property: report matches hand counting and is relabel invariant") {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const int k = 2 + static_cast<int>(rng.below(7));
        const auto n = 1 + rng.below(60);
        std::vector<int> y, p;
        for (std::uint64_t i = 0; i < n; ++i) {
            y.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
            p.push_back(rng.bernoulli(0.6) ? y.back() : static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
        }
        std::vector<int> gold_classes = y;
        std::sort(gold_classes.begin(), gold_classes.end());
        gold_classes.erase(std::unique(gold_classes.begin(), gold_classes.end()), gold_classes.end());
        double expect = 0.0;
        for (int c : gold_classes) expect += class_f1(y, p, c);
        expect /= static_cast<double>(gold_classes.size());
        const auto r = classification_report(y, p);
        CHECK(std::abs(r.macro_f1 - expect) < 1e-12);
        for (const auto& c : r.per_class) CHECK(std::abs(c.f1 - f1_score(c.precision, c.recall)) < 1e-15);

        std::vector<int> perm(static_cast<std::size_t>(k));
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span<int>(perm));
        std::vector<int> y2, p2;
        for (std::size_t i = 0; i < y.size(); ++i) {
            y2.push_back(perm[static_cast<std::size_t>(y[i])]);
            p2.push_back(perm[static_cast<std::size_t>(p[i])]);
        }
        const auto r2 = classification_report(y2, p2);
        CHECK(std::abs(r2.macro_f1 - r.macro_f1) < 1e-12);
        CHECK(std::abs(r2.macro_precision - r.macro_precision) < 1e-12);
        CHECK(std::abs(r2.macro_recall - r.macro_recall) < 1e-12);
        CHECK(r2.accuracy == r.accuracy);
    }
}

TEST_CASE("BLEU identity, clipping and brevity") {
    const auto ref = words("the cat is on the mat");
    CHECK(bleu(ref, ref) == doctest::Approx(1.0).epsilon(1e-12));
    const auto sevens = words("the the the the the the the");
    const auto p1 = modified_precision(sevens, ref, 1);
    CHECK(p1.clipped_matches == 2);
    CHECK(p1.candidate_ngrams == 7);
    CHECK(p1.value() == doctest::Approx(2.0 / 7.0).epsilon(1e-15));
    CHECK(bleu(sevens, ref, 1) == doctest::Approx(2.0 / 7.0).epsilon(1e-12));

    const auto disjoint = words("dog runs fast");
    CHECK(bleu(disjoint, ref) <= 1e-9);

    // brevity penalty on a prefix: all precisions are 1
    const auto prefix = words("the cat is");
    CHECK(bleu(prefix, ref, 2) == doctest::Approx(std::exp(1.0 - 6.0 / 3.0)).epsilon(1e-12));
    CHECK_THROWS_AS(bleu(prefix, std::vector<std::string>{}), PreconditionError);
}

TEST_CASE("property: BLEU stays in the unit interval") {
    Rng rng(5);
    const std::vector<std::string> v = {"a", "b", "c", "d", "e"};
    for (int t = 0; t < 300; ++t) {
        std::vector<std::string> c, r;
        const auto nc = 1 + rng.below(8);
        const auto nr = 1 + rng.below(8);
        for (std::uint64_t i = 0; i < nc; ++i) c.push_back(v[rng.below(v.size())]);
        for (std::uint64_t i = 0; i < nr; ++i) r.push_back(v[rng.below(v.size())]);
        const double b = bleu(c, r);
        CHECK(b >= 0.0);
        CHECK(b <= 1.0 + 1e-12);
        CHECK(bleu(r, r) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("Cohen's kappa") {
    const std::vector<std::string> a = {"A", "A", "B", "B"};
    const std::vector<std::string> b = {"A", "B", "B", "B"};
    CHECK(std::abs(cohen_kappa(a, b) - 0.5) < 1e-9);
    CHECK(cohen_kappa(a, b) == cohen_kappa(b, a));
    CHECK(cohen_kappa(a, a) == 1.0);
    const std::vector<std::string> same = {"A", "A"};
    CHECK(cohen_kappa(same, same) == 1.0);
    const std::vector<std::string> other = {"B", "B"};
    // each rater is constant, on different categories: chance agreement is 0, observed 0
    CHECK(cohen_kappa(same, other) == 0.0);
    CHECK_THROWS_AS(cohen_kappa(a, same), PreconditionError);
    CHECK_THROWS_AS(cohen_kappa(std::vector<int>{}, std::vector<int>{}), PreconditionError);
}

TEST_CASE("kappa of independent raters is near zero") {
    Rng rng(2024);
    std::vector<int> a, b;
    for (int i = 0; i < 10000; ++i) {
        a.push_back(static_cast<int>(rng.below(3)));
        b.push_back(static_cast<int>(rng.below(3)));
    }
    CHECK(std::abs(cohen_kappa(a, b)) <= 0.05);
}

TEST_CASE("embedding similarity") {
    const auto c = rows({{1, 0, 0}, {0, 1, 0}});
    CHECK(embed_score_vectors(c, c).f1 == doctest::Approx(1.0).epsilon(1e-9));
    const auto orth = rows({{0, 0, 1}});
    const auto s = embed_score_vectors(c, orth);
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 0.0);
    CHECK(s.f1 == 0.0);
    CHECK_THROWS_AS(embed_score_vectors(c, rows({{0, 0, 0}})), PreconditionError);

    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        nn::Tensor x(1 + rng.below(6), 4), y(1 + rng.below(6), 4);
        for (double& v : x.data) v = rng.normal();
        for (double& v : y.data) v = rng.normal();
        const auto xy = embed_score_vectors(x, y);
        const auto yx = embed_score_vectors(y, x);
        CHECK(xy.precision == doctest::Approx(yx.recall).epsilon(1e-12));
        nn::Tensor xs = x;
        for (double& v : xs.data) v *= 3.7;
        CHECK(embed_score_vectors(xs, y).f1 == doctest::Approx(xy.f1).epsilon(1e-12));
    }
}

TEST_CASE("embed score over model token vectors") {
    std::vector<text::TokenSequence> seqs = {text::tokenize("確かに蛾は怖いですね", text::TokenizerMode::Character)};
    const auto vocab = text::Vocabulary::build(seqs, 1, text::TokenizerMode::Character);
    const auto m = testing::random_model(nn::EncoderKind::SingleHeadAttention, vocab.size(), 2, 1, 6, 5, 20);
    const auto& toks = seqs[0].tokens;
    CHECK(embed_score(m, vocab, toks, toks).f1 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(embed_score(m, vocab, std::vector<std::string>{}, toks), PreconditionError);
}

TEST_CASE("cause accuracy") {
    const bool all[] = {true, true};
    CHECK(cause_accuracy(all) == 1.0);
    const bool half[] = {true, false, true, false};
    const bool shuffled[] = {false, true, false, true};
    CHECK(cause_accuracy(half) == 0.5);
    CHECK(cause_accuracy(shuffled) == cause_accuracy(half));
    CHECK_THROWS_AS(cause_accuracy(std::span<const bool>()), PreconditionError);
}
