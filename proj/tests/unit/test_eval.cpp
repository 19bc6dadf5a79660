#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "../support/metric_oracle.hpp"
#include "ptgnn/eval.hpp"
#include "ptgnn/video.hpp"

using namespace ptgnn;

namespace {

Tensor logits_from(const std::vector<std::vector<double>>& rows) {
  std::vector<real> v;
  for (const auto& r : rows) {
    for (double x : r) v.push_back(static_cast<real>(x));
  }
  return Tensor({rows.size(), rows[0].size()}, std::move(v));
}

}  // namespace

TEST_CASE("top-k: perfect, full-width and ranked examples") {
  const Tensor eye = logits_from({{5, 1, 0}, {0, 5, 1}, {1, 0, 5}});
  CHECK(topk_accuracy(eye, {0, 1, 2}, 1) == 100.0);

  const Tensor flat = Tensor::zeros({4, kNumLevels});
  CHECK(topk_accuracy(flat, {0, 3, 7, 10}, kNumLevels) == 100.0);

  // true label ranked 1st, 2nd and 5th
  const Tensor l = logits_from({{9, 8, 7, 6, 5, 4}, {8, 9, 7, 6, 5, 4}, {9, 8, 7, 6, 5, 4}});
  CHECK(topk_accuracy(l, {0, 0, 4}, 3) == doctest::Approx(66.6667).epsilon(1e-5));
}

TEST_CASE("top-k: ties go to the lower class index") {
  const Tensor t = logits_from({{1, 1, 1}});
  CHECK(topk_accuracy(t, {0}, 1) == 100.0);
  CHECK(topk_accuracy(t, {1}, 1) == 0.0);
  CHECK(topk_accuracy(t, {1}, 2) == 100.0);
  CHECK(predictions(t) == std::vector<int>{0});
}

TEST_CASE("top-k: contract errors") {
  CHECK_THROWS_AS(topk_accuracy(Tensor::zeros({1, 3}), {}, 1), ContractError);
  CHECK_THROWS_AS(topk_accuracy(Tensor::zeros({1, 3}), {0}, 0), ContractError);
  CHECK_THROWS_AS(topk_accuracy(Tensor::zeros({2, 3}), {0}, 1), ContractError);
}

TEST_CASE("macro F1: worked examples") {
  CHECK(macro_f1({{3, 0}, {0, 5}}) == 100.0);
  CHECK(macro_f1({{1, 1}, {1, 1}}) == doctest::Approx(50.0));
  // balanced two-class set, every prediction is class 0
  CHECK(macro_f1({{2, 0}, {2, 0}}) == doctest::Approx(100.0 / 3.0));
}

TEST_CASE("macro F1: unsupported classes are excluded and reported") {
  const F1Report r = macro_f1_report({{2, 0, 0}, {0, 0, 0}, {1, 0, 1}});
  CHECK(r.excluded == std::vector<std::size_t>{1});
  CHECK(std::isnan(r.per_class[1]));
  CHECK(r.per_class[0] == doctest::Approx(0.8));
  CHECK(r.per_class[2] == doctest::Approx(2.0 / 3.0));
  CHECK(r.macro == doctest::Approx(100.0 * (0.8 + 2.0 / 3.0) / 2));
}

TEST_CASE("metrics agree exactly with the brute-force oracle") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto in = oracle::random_instance(rng, kNumLevels);
    const Tensor t = logits_from(in.scores);
    REQUIRE(predictions(t) == in.pred);
    for (std::size_t k : {1, 3, 11}) CHECK(topk_accuracy(t, in.labels, k) == oracle::topk(in.scores, in.labels, k));
    CHECK(macro_f1(confusion_matrix(in.pred, in.labels, kNumLevels)) ==
          oracle::macro_f1(in.pred, in.labels, kNumLevels));
  }
}

TEST_CASE("properties: top-k monotone in k, F1 invariant to relabeling, rows sum to support") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = oracle::random_instance(rng, kNumLevels);
    const Tensor t = logits_from(in.scores);
    double prev = 0;
    for (std::size_t k = 1; k <= kNumLevels; ++k) {
      const double a = topk_accuracy(t, in.labels, k);
      CHECK(a >= prev);
      prev = a;
    }
    CHECK(prev == 100.0);

    const Confusion c = confusion_matrix(in.pred, in.labels, kNumLevels);
    for (std::size_t k = 0; k < kNumLevels; ++k) {
      long row = 0;
      for (long v : c[k]) row += v;
      CHECK(row == std::count(in.labels.begin(), in.labels.end(), static_cast<int>(k)));
    }
    std::vector<int> perm(kNumLevels);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> p2, l2;
    for (int v : in.pred) p2.push_back(perm[v]);
    for (int v : in.labels) l2.push_back(perm[v]);
    CHECK(macro_f1(confusion_matrix(p2, l2, kNumLevels)) == doctest::Approx(macro_f1(c)).epsilon(1e-12));
  }
}

TEST_CASE("confusion matrix rejects labels outside the class range") {
  CHECK_THROWS_AS(confusion_matrix({0}, {11}, kNumLevels), LabelRangeError);
  CHECK_THROWS_AS(confusion_matrix({-1}, {0}, kNumLevels), LabelRangeError);
}

TEST_CASE("alignment report: identical, orthogonal and shuffled pairs") {
  const Tensor z = Tensor({3, 2}, {1, 0, 0, 1, 1, 1});
  const auto same = alignment_report(z, z, Pairing::paired);
  CHECK(same.cosine == doctest::Approx(1.0));
  CHECK(same.mse == 0.0);

  const auto ortho = alignment_report(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0, 1}), Pairing::paired);
  CHECK(ortho.cosine == doctest::Approx(0.0));
  CHECK(ortho.mse == doctest::Approx(2.0));

  const Tensor e = Tensor({2, 2}, {1, 0, 0, 1});
  CHECK(alignment_report(e, e, Pairing::shuffled).cosine == doctest::Approx(0.0));
  CHECK_THROWS_AS(alignment_report(z, e, Pairing::paired), ContractError);
}

TEST_CASE("derangement is a single cycle with no fixed points") {
  for (std::size_t n : {2, 3, 7, 50}) {
    const auto p = derangement(n, n);
    std::set<std::size_t> seen(p.begin(), p.end());
    CHECK(seen.size() == n);
    std::size_t i = 0, len = 0;
    do {
      CHECK(p[i] != i);
      i = p[i];
      ++len;
    } while (i != 0);
    CHECK(len == n);
  }
}

TEST_CASE("fold plan: subject-grouped partition, deterministic") {
  std::vector<std::size_t> subj;
  for (std::size_t s = 0; s < 10; ++s) {
    for (std::size_t w = 0; w < 7 + s; ++w) subj.push_back(s);
  }
  const FoldPlan plan = FoldPlan::make(subj, 10, 5, 3);
  std::vector<int> hits(subj.size(), 0);
  std::vector<int> subject_fold(10, -1);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(plan.subjects[f].size() == 2);
    for (std::size_t w : plan.test[f]) {
      ++hits[w];
      if (subject_fold[subj[w]] < 0) subject_fold[subj[w]] = static_cast<int>(f);
      CHECK(subject_fold[subj[w]] == static_cast<int>(f));
    }
    const auto train = plan.train(f);
    CHECK(train.size() + plan.test[f].size() == subj.size());
    for (std::size_t w : train) {
      CHECK(std::find(plan.subjects[f].begin(), plan.subjects[f].end(), subj[w]) == plan.subjects[f].end());
    }
  }
  for (int h : hits) CHECK(h == 1);
  CHECK(FoldPlan::make(subj, 10, 5, 3).test == plan.test);
  CHECK(FoldPlan::make(subj, 10, 5, 4).subjects != plan.subjects);
  CHECK_THROWS_AS(FoldPlan::make(subj, 10, 1, 3), ConfigError);
  CHECK_THROWS_AS(FoldPlan::make(subj, 10, 11, 3), ConfigError);
}

TEST_CASE("summary uses the sample standard deviation") {
  const Summary s = summarize({1, 2, 3, 4});
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(summarize({7}).std == 0.0);
}
