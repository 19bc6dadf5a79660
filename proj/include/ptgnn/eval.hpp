#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptgnn/numerics/tensor.hpp"

PTGNN_NAMESPACE_BEGIN

using Confusion = std::vector<std::vector<long>>;

/// Classes ordered by descending score; equal scores keep the lower index first.
std::vector<std::size_t> rank_classes(std::span<const real> scores);

/// Percentage of rows whose label is among the k best-ranked classes.
/// logits is [B, C].
double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, std::size_t k);

std::vector<int> predictions(const Tensor& logits);

/// confusion[true][predicted]
Confusion confusion_matrix(const std::vector<int>& predicted, const std::vector<int>& labels,
                           std::size_t classes);

struct F1Report {
  double macro = 0;                  // percentage
  std::vector<double> per_class;     // NaN for classes without support
  std::vector<std::size_t> excluded; // classes with zero support
};

/// Unweighted mean of per-class F1 over classes that occur in the labels.
F1Report macro_f1_report(const Confusion& c);
double macro_f1(const Confusion& c);

enum class Pairing { paired, shuffled };

struct AlignmentMetrics {
  double cosine = 0;  // mean cosine similarity over pairs
  double mse = 0;     // mean squared distance over pairs
};

/// z_v and z_p are [N, d]. Shuffled pairing matches every z_v with the z_p of
/// another sample (a single random cycle, so no sample keeps its own).
AlignmentMetrics alignment_report(const Tensor& z_v, const Tensor& z_p, Pairing mode, std::uint64_t seed = 17);

/// Random cyclic permutation of 0..n-1 (Sattolo). n = 1 yields the identity.
std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed);

/// Subject-grouped folds: subjects are shuffled with `seed` and dealt round
/// robin, so each subject's windows land in exactly one test fold.
struct FoldPlan {
  std::vector<std::vector<std::size_t>> test;  // window indices per fold
  std::vector<std::vector<std::size_t>> subjects;

  static FoldPlan make(const std::vector<std::size_t>& window_subjects, std::size_t n_subjects, std::size_t folds,
                       std::uint64_t seed);
  std::vector<std::size_t> train(std::size_t fold) const;
};

struct Summary {
  double mean = 0, std = 0;
};
Summary summarize(const std::vector<double>& v);

PTGNN_NAMESPACE_END
