#pragma once

// Brute-force reference metrics. They work from per-sample lists rather than
// from a confusion matrix and share no code with the library.

#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

/// Sample is a hit when fewer than k classes outrank the true one. A class
/// outranks the label when it scores higher, or scores equal with a lower index.
inline double topk(const std::vector<std::vector<double>>& scores, const std::vector<int>& labels, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double s = scores[i][labels[i]];
    std::size_t above = 0;
    for (std::size_t c = 0; c < scores[i].size(); ++c) {
      const int ci = static_cast<int>(c);
      if (scores[i][c] > s || (scores[i][c] == s && ci < labels[i])) ++above;
    }
    if (above < k) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
}

/// F1 per class from TP, FP and FN counted sample by sample; classes absent
/// from the labels are skipped.
inline double macro_f1(const std::vector<int>& pred, const std::vector<int>& labels, std::size_t classes) {
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool is_k = labels[i] == static_cast<int>(k), said_k = pred[i] == static_cast<int>(k);
      tp += is_k && said_k;
      fp += !is_k && said_k;
      fn += is_k && !said_k;
    }
    if (tp + fn == 0) continue;
    total += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    ++counted;
  }
  return counted ? 100.0 * total / static_cast<double>(counted) : 0.0;
}

/// Random classification instance. Scores are small integers so ties are common.
struct Instance {
  std::vector<std::vector<double>> scores;
  std::vector<int> labels;
  std::vector<int> pred;  // argmax, ties to the lower index
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t classes) {
  Instance in;
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
  // Some instances leave classes unused so zero-support handling is covered.
  const int top = std::uniform_int_distribution<int>(0, 1)(rng) ? static_cast<int>(classes) - 1 : 4;
  std::uniform_int_distribution<int> label(0, top), score(0, 6);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(classes);
    for (auto& v : s) v = score(rng);
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (s[c] > s[best]) best = c;
    }
    in.scores.push_back(s);
    in.labels.push_back(label(rng));
    in.pred.push_back(static_cast<int>(best));
  }
  return in;
}

}  // namespace oracle
