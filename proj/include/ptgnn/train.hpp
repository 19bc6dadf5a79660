#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ptgnn/data.hpp"
#include "ptgnn/eval.hpp"
#include "ptgnn/model.hpp"
#include "ptgnn/numerics/optim.hpp"

PTGNN_NAMESPACE_BEGIN

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  AdamHyper adam{};
  std::size_t patience = 10;    // epochs without validation improvement
  double val_fraction = 0.1;    // of the training windows, held out for early stopping
  real beta = real(1);
  bool bidirectional = false;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Ablation {
  bool no_diffattention = false;
  bool no_alignment = false;
  bool shuffled_baseline = false;
  bool adjacency_normalized = false;

  /// Comma-separated flag list; empty means the full model.
  static Ablation parse(const std::string& text);
  std::string str() const;
};

/// Applies ablation switches to copies of the configuration.
void apply_ablation(const Ablation& a, ModelConfig& model, TrainOptions& train);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0, sensor_ce = 0, video_ce = 0, align = 0;
  double val_loss = 0, val_top1 = 0;  // val_loss: sensor + video cross-entropy
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch finished
  bool diverged = false;
  std::string divergence;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Fits the normalizer on `train_windows`, stores it in the model and trains
/// with Adam. The model ends holding the parameters of the epoch with the
/// lowest validation loss; after a numeric failure it holds the last stable
/// epoch's parameters and `diverged` is set.
TrainResult train_model(Model& model, const Dataset& ds, const std::vector<std::size_t>& train_windows,
                        const TrainOptions& opts, const EpochCallback& on_epoch = {});

struct Predictions {
  std::vector<int> labels;
  Tensor logits;  // [N, 11] from the video branch
  Tensor z_v;     // [N, d]
  Tensor z_p;     // [N, d]; undefined unless sensors were requested
};

Predictions predict(Model& model, const Dataset& ds, const std::vector<std::size_t>& windows,
                    std::size_t batch_size = 64, bool with_sensors = true);

struct FoldMetrics {
  std::size_t fold = 0;
  std::size_t test_windows = 0;
  double top1 = 0, top3 = 0, macro_f1 = 0;
  double cosine = 0, cosine_shuffled = 0;
  double align_mse = 0, align_mse_shuffled = 0;
  std::size_t epochs_run = 0, best_epoch = 0;
  Confusion confusion;
  std::vector<std::size_t> excluded_classes;
};

/// Classification metrics use video-only logits, as at deployment.
FoldMetrics evaluate_predictions(const Predictions& p);

struct MetricsReport {
  std::string variant;
  std::vector<FoldMetrics> folds;
  Summary top1, top3, macro_f1, cosine, cosine_shuffled, align_mse, align_mse_shuffled;
  Confusion confusion;  // summed over folds

  /// With the shuffled_baseline flag the headline alignment numbers use the
  /// shuffled pairing.
  bool shuffled_headline = false;

  void aggregate();
  std::string to_json() const;
};

struct CvSettings {
  ModelConfig model;
  TrainOptions train;
  std::size_t folds = 5;
  std::uint64_t fold_seed = 1;
  std::size_t parallel_folds = 1;
  Ablation ablation;
};

/// Throws ConfigError when the settings cannot run on windows of `window` s
/// with `frame_dim` video features.
void validate_settings(const CvSettings& s, std::size_t window, std::size_t frame_dim);

using FoldCallback = std::function<void(std::size_t fold, const EpochLog&)>;

MetricsReport run_cv(const Dataset& ds, const CvSettings& s, const FoldCallback& on_epoch = {});

struct SweepCell {
  std::size_t window = 0, kernel = 0;
  bool ok = false;
  std::string error;
  MetricsReport report;
};

/// One run_cv per (window, kernel) cell; kernel is the difference window
/// 2k+1. Failing cells keep their error and the sweep moves on.
std::vector<SweepCell> sweep(const std::function<Dataset(std::size_t window)>& make_dataset,
                             const std::vector<std::size_t>& windows, const std::vector<std::size_t>& kernels,
                             const CvSettings& s);
std::string sweep_csv(const std::vector<SweepCell>& cells);

/// Caps parallel folds by PTGNN_THREADS when set.
std::size_t thread_cap(std::size_t requested);

PTGNN_NAMESPACE_END
