#include "ptgnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

PTGNN_NAMESPACE_BEGIN

std::vector<std::size_t> rank_classes(std::span<const real> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

namespace {

void check_logits(const Tensor& logits, std::size_t n_labels) {
  if (logits.dim() != 2) throw DimensionError("metrics: logits must be [B, C]");
  if (logits.size(0) == 0 || n_labels == 0) throw ContractError("metrics: empty batch");
  if (logits.size(0) != n_labels) throw ContractError("metrics: logits and labels disagree on B");
}

}  // namespace

double topk_accuracy(const Tensor& logits, const std::vector<int>& labels, std::size_t k) {
  check_logits(logits, labels.size());
  if (k == 0) throw ContractError("topk_accuracy: k must be at least 1");
  const std::size_t B = logits.size(0), C = logits.size(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < B; ++i) {
    const auto order = rank_classes(logits.data().subspan(i * C, C));
    const std::size_t kk = std::min(k, C);
    for (std::size_t j = 0; j < kk; ++j) {
      if (static_cast<int>(order[j]) == labels[i]) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(B);
}

std::vector<int> predictions(const Tensor& logits) {
  if (logits.dim() != 2) throw DimensionError("predictions: logits must be [B, C]");
  const std::size_t B = logits.size(0), C = logits.size(1);
  std::vector<int> out(B);
  for (std::size_t i = 0; i < B; ++i) out[i] = static_cast<int>(rank_classes(logits.data().subspan(i * C, C))[0]);
  return out;
}

Confusion confusion_matrix(const std::vector<int>& predicted, const std::vector<int>& labels, std::size_t classes) {
  if (predicted.size() != labels.size()) throw ContractError("confusion_matrix: size mismatch");
  Confusion c(classes, std::vector<long>(classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes || predicted[i] < 0 ||
        static_cast<std::size_t>(predicted[i]) >= classes) {
      throw LabelRangeError("confusion_matrix: class index out of range");
    }
    ++c[labels[i]][predicted[i]];
  }
  return c;
}

F1Report macro_f1_report(const Confusion& c) {
  const std::size_t n = c.size();
  for (const auto& row : c) {
    if (row.size() != n) throw DimensionError("macro_f1: confusion must be square");
  }
  F1Report r;
  r.per_class.assign(n, std::numeric_limits<double>::quiet_NaN());
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < n; ++k) {
    long support = 0, predicted = 0;
    for (std::size_t j = 0; j < n; ++j) {
      support += c[k][j];
      predicted += c[j][k];
    }
    if (support == 0) {
      r.excluded.push_back(k);
      continue;
    }
    // 2PR/(P+R) reduces to 2TP/(support + predicted); one rounding step.
    const double f1 = 2.0 * static_cast<double>(c[k][k]) / static_cast<double>(support + predicted);
    r.per_class[k] = f1;
    total += f1;
    ++counted;
  }
  r.macro = counted ? 100.0 * total / static_cast<double>(counted) : 0.0;
  return r;
}

double macro_f1(const Confusion& c) { return macro_f1_report(c).macro; }

std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i-- > 1;) {
    std::uniform_int_distribution<std::size_t> u(0, i - 1);
    std::swap(p[i], p[u(rng)]);
  }
  return p;
}

AlignmentMetrics alignment_report(const Tensor& z_v, const Tensor& z_p, Pairing mode, std::uint64_t seed) {
  if (z_v.dim() != 2 || z_p.dim() != 2) throw DimensionError("alignment_report: embeddings must be [N, d]");
  if (z_v.shape() != z_p.shape()) throw ContractError("alignment_report: z_v and z_p differ in shape");
  const std::size_t N = z_v.size(0), d = z_v.size(1);
  if (N == 0) throw ContractError("alignment_report: no samples");
  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  if (mode == Pairing::shuffled) perm = derangement(N, seed);
  const auto v = z_v.data(), p = z_p.data();
  AlignmentMetrics m;
  for (std::size_t i = 0; i < N; ++i) {
    double dot = 0, nv = 0, np = 0, sq = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double a = v[i * d + j], b = p[perm[i] * d + j];
      dot += a * b;
      nv += a * a;
      np += b * b;
      sq += (a - b) * (a - b);
    }
    m.cosine += (nv > 0 && np > 0) ? dot / std::sqrt(nv * np) : 0.0;
    m.mse += sq;
  }
  m.cosine /= static_cast<double>(N);
  m.mse /= static_cast<double>(N);
  return m;
}

FoldPlan FoldPlan::make(const std::vector<std::size_t>& window_subjects, std::size_t n_subjects, std::size_t folds,
                        std::uint64_t seed) {
  if (folds < 2) throw ConfigError("eval.folds must be at least 2");
  if (n_subjects < folds) {
    throw ConfigError("eval.folds = " + std::to_string(folds) + " needs at least as many subjects, have " +
                      std::to_string(n_subjects));
  }
  std::vector<std::size_t> order(n_subjects);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, fnv1a("folds")));
  std::shuffle(order.begin(), order.end(), rng);
  FoldPlan plan;
  plan.test.resize(folds);
  plan.subjects.resize(folds);
  std::vector<std::size_t> fold_of(n_subjects);
  for (std::size_t i = 0; i < n_subjects; ++i) {
    fold_of[order[i]] = i % folds;
    plan.subjects[i % folds].push_back(order[i]);
  }
  for (auto& s : plan.subjects) std::sort(s.begin(), s.end());
  for (std::size_t w = 0; w < window_subjects.size(); ++w) {
    if (window_subjects[w] >= n_subjects) throw ContractError("FoldPlan: subject index out of range");
    plan.test[fold_of[window_subjects[w]]].push_back(w);
  }
  return plan;
}

std::vector<std::size_t> FoldPlan::train(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < test.size(); ++f) {
    if (f != fold) out.insert(out.end(), test[f].begin(), test[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.std += (x - s.mean) * (x - s.mean);
  s.std = v.size() > 1 ? std::sqrt(s.std / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

PTGNN_NAMESPACE_END
