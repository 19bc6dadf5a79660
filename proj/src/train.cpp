#include "ptgnn/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ptgnn/losses.hpp"

PTGNN_NAMESPACE_BEGIN

void TrainOptions::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(adam.lr > 0) || !std::isfinite(adam.lr)) throw ConfigError("train.lr must be positive");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("train.val_fraction must be in [0, 1)");
  LossWeights{beta}.validate();
}

Ablation Ablation::parse(const std::string& text) {
  Ablation a;
  std::stringstream ss(text);
  std::string f;
  while (std::getline(ss, f, ',')) {
    f.erase(0, f.find_first_not_of(" \t"));
    f.erase(f.find_last_not_of(" \t") + 1);
    if (f.empty() || f == "full" || f == "none") continue;
    if (f == "no_diffattention") a.no_diffattention = true;
    else if (f == "no_alignment") a.no_alignment = true;
    else if (f == "shuffled_baseline") a.shuffled_baseline = true;
    else if (f == "adjacency_normalized") a.adjacency_normalized = true;
    else throw ConfigError("unknown ablation flag '" + f + "'");
  }
  return a;
}

std::string Ablation::str() const {
  std::string s;
  auto add = [&](bool on, const char* n) {
    if (on) s += (s.empty() ? "" : ",") + std::string(n);
  };
  add(no_diffattention, "no_diffattention");
  add(no_alignment, "no_alignment");
  add(shuffled_baseline, "shuffled_baseline");
  add(adjacency_normalized, "adjacency_normalized");
  return s.empty() ? "full" : s;
}

void apply_ablation(const Ablation& a, ModelConfig& model, TrainOptions& train) {
  if (a.no_diffattention) model.dae.variant = AttentionVariant::standard;
  if (a.no_alignment) train.beta = 0;
  if (a.adjacency_normalized) model.graph.normalized = true;
}

namespace {

using Snapshot = std::vector<std::vector<real>>;

Snapshot snapshot(const ParameterSet& ps) {
  Snapshot s;
  for (const auto& nt : ps.all()) s.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
  return s;
}

void restore(ParameterSet& ps, const Snapshot& s) {
  auto all = ps.all();
  for (std::size_t i = 0; i < all.size(); ++i) std::copy(s[i].begin(), s[i].end(), all[i].tensor.data().begin());
}

bool finite(const Tensor& t) { return std::isfinite(static_cast<double>(t.item())); }

struct Split {
  std::vector<std::size_t> fit, val;
};

Split split_validation(const std::vector<std::size_t>& windows, double fraction, std::uint64_t seed) {
  Split s;
  std::vector<std::size_t> order = windows;
  std::mt19937_64 rng(mix_seed(seed, fnv1a("validation")));
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::round(fraction * static_cast<double>(order.size())));
  if (fraction > 0 && n_val == 0 && order.size() > 1) n_val = 1;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.fit.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

// Mean eval-mode classification loss and video top-1 over `windows`.
std::pair<double, double> validation(Model& model, const Dataset& ds, const Normalizer& norm,
                                     const std::vector<std::size_t>& windows, const TrainOptions& o) {
  double loss = 0, hits = 0;
  for (std::size_t b = 0; b < windows.size(); b += o.batch_size) {
    const std::vector<std::size_t> idx(windows.begin() + static_cast<std::ptrdiff_t>(b),
                                       windows.begin() + static_cast<std::ptrdiff_t>(std::min(windows.size(), b + o.batch_size)));
    const Batch batch = make_batch(ds, idx, norm, model.config().video.segments);
    const auto s = model.sensor_forward(batch.sensors, Mode::eval);
    const auto v = model.video_forward(batch.clips, Mode::eval);
    const auto t = training_loss(s.probe_logits, v.logits, v.z_v, s.z_p, batch.labels, o.beta, o.bidirectional);
    // the alignment target moves while the sensor branch trains, so only the
    // classification terms decide early stopping
    loss += (static_cast<double>(t.sensor_ce.item()) + t.video_ce.item()) * static_cast<double>(idx.size());
    hits += topk_accuracy(v.logits, batch.labels, 1) * static_cast<double>(idx.size()) / 100.0;
  }
  const double n = static_cast<double>(windows.size());
  return {loss / n, 100.0 * hits / n};
}

}  // namespace

TrainResult train_model(Model& model, const Dataset& ds, const std::vector<std::size_t>& train_windows,
                        const TrainOptions& opts, const EpochCallback& on_epoch) {
  opts.validate();
  if (train_windows.empty()) throw DataError("train_model: no training windows");
  const Normalizer norm = Normalizer::fit(ds, train_windows);
  norm.export_to(model.params());
  const Split split = split_validation(train_windows, opts.val_fraction, opts.seed);
  const std::size_t S = model.config().video.segments;

  Adam adam(model.params().learnable(), opts.adam);
  TrainResult result;
  Snapshot best = snapshot(model.params());
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order = split.fit;

  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(opts.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    double seen = 0;
    try {
      for (std::size_t b = 0; b < order.size(); b += opts.batch_size) {
        const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + opts.batch_size)));
        const Batch batch = make_batch(ds, idx, norm, S);
        Tape tape;
        LossTerms t;
        {
          auto rec = tape.record();
          const auto s = model.sensor_forward(batch.sensors, Mode::train, mix_seed(mix_seed(opts.seed, epoch), b));
          const auto v = model.video_forward(batch.clips, Mode::train);
          t = training_loss(s.probe_logits, v.logits, v.z_v, s.z_p, batch.labels, opts.beta, opts.bidirectional);
        }
        if (!finite(t.total)) throw NumericError("training loss became non-finite");
        backward(t.total);
        adam.step();
        adam.zero_grad();
        const double w = static_cast<double>(idx.size());
        log.train_loss += t.total.item() * w;
        log.sensor_ce += t.sensor_ce.item() * w;
        log.video_ce += t.video_ce.item() * w;
        log.align += t.align.item() * w;
        seen += w;
      }
      if (seen > 0) {
        log.train_loss /= seen;
        log.sensor_ce /= seen;
        log.video_ce /= seen;
        log.align /= seen;
      }
      if (!split.val.empty()) {
        std::tie(log.val_loss, log.val_top1) = validation(model, ds, norm, split.val, opts);
      } else {
        log.val_loss = log.train_loss;
      }
      if (!std::isfinite(log.val_loss)) throw NumericError("validation loss became non-finite");
    } catch (const NumericError& e) {
      result.diverged = true;
      result.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.val_loss < best_val) {
      best_val = log.val_loss;
      best = snapshot(model.params());
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= opts.patience) {
      break;
    }
  }
  restore(model.params(), best);
  return result;
}

namespace {

Tensor stack_rows(const std::vector<Tensor>& parts) {
  std::vector<real> v;
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    rows += p.size(0);
    cols = p.size(1);
    v.insert(v.end(), p.data().begin(), p.data().end());
  }
  return Tensor({rows, cols}, std::move(v));
}

}  // namespace

Predictions predict(Model& model, const Dataset& ds, const std::vector<std::size_t>& windows,
                    std::size_t batch_size, bool with_sensors) {
  if (windows.empty()) throw ContractError("predict: no windows");
  const Normalizer norm = Normalizer::import_from(model.params());
  std::vector<Tensor> logits, zv, zp;
  Predictions p;
  for (std::size_t b = 0; b < windows.size(); b += batch_size) {
    const std::vector<std::size_t> idx(windows.begin() + static_cast<std::ptrdiff_t>(b),
                                       windows.begin() + static_cast<std::ptrdiff_t>(std::min(windows.size(), b + batch_size)));
    const Batch batch = make_batch(ds, idx, norm, model.config().video.segments);
    const auto v = model.video_forward(batch.clips, Mode::eval);
    logits.push_back(v.logits);
    zv.push_back(v.z_v);
    if (with_sensors) zp.push_back(model.sensor_forward(batch.sensors, Mode::eval).z_p);
    p.labels.insert(p.labels.end(), batch.labels.begin(), batch.labels.end());
  }
  p.logits = stack_rows(logits);
  p.z_v = stack_rows(zv);
  if (with_sensors) p.z_p = stack_rows(zp);
  return p;
}

FoldMetrics evaluate_predictions(const Predictions& p) {
  FoldMetrics m;
  m.test_windows = p.labels.size();
  m.top1 = topk_accuracy(p.logits, p.labels, 1);
  m.top3 = topk_accuracy(p.logits, p.labels, 3);
  m.confusion = confusion_matrix(predictions(p.logits), p.labels, kNumLevels);
  const F1Report f1 = macro_f1_report(m.confusion);
  m.macro_f1 = f1.macro;
  m.excluded_classes = f1.excluded;
  if (p.z_p.defined()) {
    const auto paired = alignment_report(p.z_v, p.z_p, Pairing::paired);
    const auto shuffled = alignment_report(p.z_v, p.z_p, Pairing::shuffled);
    m.cosine = paired.cosine;
    m.align_mse = paired.mse;
    m.cosine_shuffled = shuffled.cosine;
    m.align_mse_shuffled = shuffled.mse;
  }
  return m;
}

void MetricsReport::aggregate() {
  auto collect = [&](double FoldMetrics::*f) {
    std::vector<double> v;
    for (const auto& fm : folds) v.push_back(fm.*f);
    return summarize(v);
  };
  top1 = collect(&FoldMetrics::top1);
  top3 = collect(&FoldMetrics::top3);
  macro_f1 = collect(&FoldMetrics::macro_f1);
  cosine = collect(&FoldMetrics::cosine);
  cosine_shuffled = collect(&FoldMetrics::cosine_shuffled);
  align_mse = collect(&FoldMetrics::align_mse);
  align_mse_shuffled = collect(&FoldMetrics::align_mse_shuffled);
  confusion.assign(kNumLevels, std::vector<long>(kNumLevels, 0));
  for (const auto& fm : folds) {
    for (std::size_t i = 0; i < kNumLevels; ++i) {
      for (std::size_t j = 0; j < kNumLevels; ++j) confusion[i][j] += fm.confusion[i][j];
    }
  }
}

std::string MetricsReport::to_json() const {
  using nlohmann::json;
  auto ms = [](const Summary& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
  json j;
  j["variant"] = variant;
  j["top1"] = ms(top1);
  j["top3"] = ms(top3);
  j["macro_f1"] = ms(macro_f1);
  const Summary& cos = shuffled_headline ? cosine_shuffled : cosine;
  const Summary& mse = shuffled_headline ? align_mse_shuffled : align_mse;
  j["cosine"] = ms(cos);
  j["align_mse"] = ms(mse);
  j["alignment"] = {{"paired", {{"cosine", ms(cosine)}, {"mse", ms(align_mse)}}},
                    {"shuffled", {{"cosine", ms(cosine_shuffled)}, {"mse", ms(align_mse_shuffled)}}}};
  j["confusion"] = confusion;
  json fl = json::array();
  for (const auto& f : folds) {
    fl.push_back({{"fold", f.fold},
                  {"test_windows", f.test_windows},
                  {"top1", f.top1},
                  {"top3", f.top3},
                  {"macro_f1", f.macro_f1},
                  {"macro_f1_excluded_classes", f.excluded_classes},
                  {"cosine", f.cosine},
                  {"cosine_shuffled", f.cosine_shuffled},
                  {"align_mse", f.align_mse},
                  {"align_mse_shuffled", f.align_mse_shuffled},
                  {"epochs_run", f.epochs_run},
                  {"best_epoch", f.best_epoch}});
  }
  j["folds"] = fl;
  return j.dump(2);
}

void validate_settings(const CvSettings& s, std::size_t window, std::size_t frame_dim) {
  ModelConfig model = s.model;
  TrainOptions train = s.train;
  apply_ablation(s.ablation, model, train);
  model.validate(window);
  train.validate();
  if (2 * model.dae.k + 1 > window) {
    throw ConfigError("diffattn.k = " + std::to_string(model.dae.k) + ": difference window of " +
                      std::to_string(2 * model.dae.k + 1) + " exceeds the " + std::to_string(window) + " s window");
  }
  if (model.video.feature_dim != frame_dim) {
    throw ConfigError("video.feature_dim = " + std::to_string(model.video.feature_dim) +
                      " but the data carries " + std::to_string(frame_dim) + " features per frame");
  }
  if (s.folds < 2) throw ConfigError("eval.folds must be at least 2");
}

std::size_t thread_cap(std::size_t requested) {
  std::size_t n = std::max<std::size_t>(1, requested);
  if (const char* env = std::getenv("PTGNN_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

MetricsReport run_cv(const Dataset& ds, const CvSettings& s, const FoldCallback& on_epoch) {
  if (ds.subjects.empty()) throw DataError("run_cv: empty dataset");
  validate_settings(s, ds.window, ds.subjects[0].frames.dim);
  ModelConfig model_cfg = s.model;
  TrainOptions train = s.train;
  apply_ablation(s.ablation, model_cfg, train);

  std::vector<std::size_t> subj;
  for (const auto& w : ds.windows) subj.push_back(w.subject);
  const FoldPlan plan = FoldPlan::make(subj, ds.subjects.size(), s.folds, s.fold_seed);

  MetricsReport report;
  report.variant = s.ablation.str();
  report.shuffled_headline = s.ablation.shuffled_baseline;
  report.folds.resize(s.folds);
  std::vector<std::exception_ptr> errors(s.folds);
  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t f; (f = next++) < s.folds;) {
      try {
        ModelConfig mc = model_cfg;
        mc.seed = mix_seed(model_cfg.seed, f);
        TrainOptions to = train;
        to.seed = mix_seed(train.seed, f);
        Model model(mc);
        const TrainResult r = train_model(model, ds, plan.train(f), to, [&](const EpochLog& l) {
          if (!on_epoch) return;
          std::lock_guard<std::mutex> lock(log_mutex);
          on_epoch(f, l);
        });
        if (r.diverged) throw NumericError("fold " + std::to_string(f) + " diverged at " + r.divergence);
        FoldMetrics m = evaluate_predictions(predict(model, ds, plan.test[f]));
        m.fold = f;
        m.epochs_run = r.log.size();
        m.best_epoch = r.best_epoch;
        report.folds[f] = std::move(m);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(thread_cap(s.parallel_folds), s.folds);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  report.aggregate();
  return report;
}

std::vector<SweepCell> sweep(const std::function<Dataset(std::size_t)>& make_dataset,
                             const std::vector<std::size_t>& windows, const std::vector<std::size_t>& kernels,
                             const CvSettings& s) {
  if (windows.empty() || kernels.empty()) throw ConfigError("sweep: window and kernel grids must be non-empty");
  std::vector<SweepCell> cells;
  for (std::size_t w : windows) {
    Dataset ds;
    std::string data_error;
    try {
      ds = make_dataset(w);
    } catch (const std::exception& e) {
      data_error = e.what();
    }
    for (std::size_t k : kernels) {
      SweepCell cell;
      cell.window = w;
      cell.kernel = k;
      try {
        if (!data_error.empty()) throw DataError(data_error);
        if (k % 2 == 0) throw ConfigError("kernel " + std::to_string(k) + " must be odd (2k+1)");
        CvSettings cs = s;
        cs.model.dae.k = (k - 1) / 2;
        cell.report = run_cv(ds, cs);
        cell.ok = true;
      } catch (const ConfigError& e) {
        cell.error = std::string("config error: ") + e.what();
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os.precision(6);
  os << "window,kernel,top1,top3,macro_f1\n";
  for (const auto& c : cells) {
    os << c.window << ',' << c.kernel << ',';
    if (c.ok) os << c.report.top1.mean << ',' << c.report.top3.mean << ',' << c.report.macro_f1.mean << '\n';
    else os << "nan,nan,nan\n";
  }
  return os.str();
}

PTGNN_NAMESPACE_END
