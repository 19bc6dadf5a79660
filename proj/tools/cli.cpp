#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "ptgnn/checkpoint.hpp"
#include "ptgnn/config.hpp"
#include "ptgnn/train.hpp"

namespace ptgnn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string data;
  std::string out = ".";
  std::string ablation;
  std::string checkpoint;
  long long seed = -1;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (!c.data.empty()) cfg.data = c.data;
  if (!c.ablation.empty()) cfg.cv.ablation = Ablation::parse(c.ablation);
  if (c.seed >= 0) {
    cfg.cv.model.seed = static_cast<std::uint64_t>(c.seed);
    cfg.cv.train.seed = static_cast<std::uint64_t>(c.seed);
  }
  cfg.validate();
  return cfg;
}

// Model and training options with the ablation switches applied, so a
// checkpoint rebuilds exactly the network that was trained.
RunConfig baked(RunConfig cfg) {
  apply_ablation(cfg.cv.ablation, cfg.cv.model, cfg.cv.train);
  return cfg;
}

Dataset dataset_for(const RunConfig& cfg, const std::string& source) {
  const Dataset ds = build_dataset(load_data(source), cfg.window, cfg.stride);
  validate_settings(cfg.cv, cfg.window, ds.subjects[0].frames.dim);
  return ds;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string confusion_csv(const Confusion& c) {
  std::ostringstream os;
  os << "true\\pred";
  for (std::size_t j = 0; j < c.size(); ++j) os << ',' << j;
  os << '\n';
  for (std::size_t i = 0; i < c.size(); ++i) {
    os << i;
    for (long v : c[i]) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

std::string epoch_header() { return "fold,epoch,train_loss,sensor_ce,video_ce,align,val_loss,val_top1\n"; }

std::string epoch_row(std::size_t fold, const EpochLog& l) {
  std::ostringstream os;
  os.precision(9);
  os << fold << ',' << l.epoch << ',' << l.train_loss << ',' << l.sensor_ce << ',' << l.video_ce << ',' << l.align
     << ',' << l.val_loss << ',' << l.val_top1 << '\n';
  return os.str();
}

Checkpoint require_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(path)) throw IoError("checkpoint " + path + " does not exist");
  return Checkpoint::load(path);
}

std::vector<std::size_t> all_windows(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

MetricsReport single_report(const std::string& variant, const FoldMetrics& m) {
  MetricsReport r;
  r.variant = variant;
  r.folds = {m};
  r.aggregate();
  return r;
}

// ---------------------------------------------------------------------------

int cmd_train(const Common& c) {
  const RunConfig cfg = baked(resolve(c));
  const Dataset ds = dataset_for(cfg, cfg.data);
  fs::create_directories(c.out);
  std::ofstream log(fs::path(c.out) / "metrics_log.csv");
  if (!log) throw IoError("cannot write metrics log in " + c.out);
  log << epoch_header();
  Model model(cfg.cv.model);
  const TrainResult r = train_model(model, ds, all_windows(ds), cfg.cv.train, [&](const EpochLog& l) {
    log << epoch_row(0, l) << std::flush;
    std::cerr << "epoch " << l.epoch << " loss " << l.train_loss << " val " << l.val_loss << "\n";
  });
  Checkpoint::from_model(model, cfg).save(fs::path(c.out) / "model.ckpt");
  if (r.diverged) {
    std::cerr << "numeric divergence (" << r.divergence << "); kept the checkpoint of epoch " << r.best_epoch
              << "\n";
    return numeric;
  }
  FoldMetrics m = evaluate_predictions(predict(model, ds, all_windows(ds)));
  m.epochs_run = r.log.size();
  m.best_epoch = r.best_epoch;
  const MetricsReport report = single_report(cfg.cv.ablation.str(), m);
  write_text(fs::path(c.out) / "metrics.json", report.to_json() + "\n");
  write_text(fs::path(c.out) / "confusion.csv", confusion_csv(report.confusion));
  std::cout << "top1 " << m.top1 << " top3 " << m.top3 << " macro_f1 " << m.macro_f1 << " cosine " << m.cosine
            << "\n";
  return ok;
}

int cmd_eval_cv(const Common& c) {
  const RunConfig cfg = resolve(c);
  const Dataset ds = dataset_for(cfg, cfg.data);
  fs::create_directories(c.out);
  std::ofstream log(fs::path(c.out) / "metrics_log.csv");
  log << epoch_header();
  const MetricsReport report = run_cv(ds, cfg.cv, [&](std::size_t fold, const EpochLog& l) { log << epoch_row(fold, l); });
  write_text(fs::path(c.out) / "metrics.json", report.to_json() + "\n");
  write_text(fs::path(c.out) / "confusion.csv", confusion_csv(report.confusion));
  std::cout << report.variant << ": top1 " << report.top1.mean << " +- " << report.top1.std << ", macro_f1 "
            << report.macro_f1.mean << ", cosine " << report.cosine.mean << " (shuffled "
            << report.cosine_shuffled.mean << ")\n";
  return ok;
}

int cmd_eval(const Common& c, bool cv) {
  if (cv) return cmd_eval_cv(c);
  const Checkpoint ck = require_checkpoint(c.checkpoint);
  const RunConfig cfg = ck.run_config();
  const Dataset ds = dataset_for(cfg, c.data.empty() ? cfg.data : c.data);
  const auto idx = all_windows(ds);
  FoldMetrics m;
  if (ck.stripped) {
    const InferenceEngine engine(ck);
    Predictions p;
    const Normalizer none = Normalizer::identity(cfg.cv.model);
    std::vector<Tensor> parts;
    for (std::size_t b = 0; b < idx.size(); b += 64) {
      const std::vector<std::size_t> chunk(idx.begin() + b, idx.begin() + std::min(idx.size(), b + 64));
      const Batch batch = make_batch(ds, chunk, none, cfg.cv.model.video.segments);
      parts.push_back(engine.logits(batch.clips));
      p.labels.insert(p.labels.end(), batch.labels.begin(), batch.labels.end());
    }
    std::vector<real> v;
    for (const auto& t : parts) v.insert(v.end(), t.data().begin(), t.data().end());
    p.logits = Tensor({p.labels.size(), kNumLevels}, std::move(v));
    m = evaluate_predictions(p);
  } else {
    Model model = ck.to_model();
    m = evaluate_predictions(predict(model, ds, idx));
  }
  const MetricsReport report = single_report(cfg.cv.ablation.str(), m);
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "metrics.json", report.to_json() + "\n");
  write_text(fs::path(c.out) / "confusion.csv", confusion_csv(report.confusion));
  std::cout << "top1 " << m.top1 << " top3 " << m.top3 << " macro_f1 " << m.macro_f1 << "\n";
  return ok;
}

int cmd_strip(const Common& c) {
  const Checkpoint ck = require_checkpoint(c.checkpoint);
  fs::path out = c.out;
  if (fs::is_directory(out)) out /= "model.video.ckpt";
  if (ck.stripped) {
    std::cerr << "notice: " << c.checkpoint << " is already stripped; written unchanged\n";
    ck.save(out);
  } else {
    ck.strip().save(out);
  }
  const Checkpoint s = Checkpoint::load(out);
  json report{{"full_parameters", ck.scalar_count()},
              {"full_bytes", fs::file_size(c.checkpoint)},
              {"stripped_parameters", s.scalar_count()},
              {"stripped_bytes", fs::file_size(out)},
              {"stripped_payload_bytes", s.payload_bytes()}};
  std::cout << report.dump(2) << "\n";
  return ok;
}

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto p = line.find(':');
      if (p != std::string::npos) return line.substr(p + 2);
    }
  }
  return "unknown";
}

}  // namespace

json bench_checkpoint(const Checkpoint& ck, std::size_t samples, std::size_t warmup, std::uint64_t seed) {
  if (samples < 10) throw ContractError("bench needs at least 10 samples, got " + std::to_string(samples));
  const InferenceEngine engine(ck);
  const VideoConfig& vc = engine.video_config();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  std::vector<real> clip(vc.segments * vc.feature_dim);
  auto refill = [&] {
    for (auto& v : clip) v = static_cast<real>(n(rng));
  };
  int sink = 0;
  for (std::size_t i = 0; i < warmup; ++i) {
    refill();
    sink += engine.infer_level(clip);
  }
  std::vector<double> ms;
  ms.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    refill();
    const auto t0 = std::chrono::steady_clock::now();
    sink += engine.infer_level(clip);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double q) {
    const std::size_t i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size()))) - 1;
    return sorted[std::min(i, sorted.size() - 1)];
  };
  double mean = 0;
  for (double v : ms) mean += v;
  mean /= static_cast<double>(ms.size());
  return json{{"samples", samples},
              {"warmup", warmup},
              {"batch_size", 1},
              {"mean_ms", mean},
              {"p50_ms", pct(0.50)},
              {"p95_ms", pct(0.95)},
              {"p99_ms", pct(0.99)},
              {"max_ms", sorted.back()},
              {"parameters", ck.strip().scalar_count()},
              {"model_mb", static_cast<double>(ck.strip().payload_bytes()) / (1024.0 * 1024.0)},
              {"scope", "normalization + video branch; clip loading excluded"},
              {"checksum", sink},
              {"machine",
               {{"cpu", cpu_model()},
                {"hardware_threads", std::thread::hardware_concurrency()},
                {"compiler", __VERSION__}}}};
}

namespace {

int cmd_bench(const Common& c, std::size_t samples, std::size_t warmup) {
  const Checkpoint ck = require_checkpoint(c.checkpoint);
  const json report = bench_checkpoint(ck, samples, warmup, 1);
  std::cout << report.dump(2) << "\n";
  if (c.out != ".") write_text(fs::path(c.out) / "bench.json", report.dump(2) + "\n");
  return ok;
}

std::vector<std::size_t> parse_list(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": '" + item + "' is not a size");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + " must list at least one value");
  return out;
}

int cmd_sweep(const Common& c, const std::string& windows, const std::string& kernels) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (!c.data.empty()) cfg.data = c.data;
  if (!c.ablation.empty()) cfg.cv.ablation = Ablation::parse(c.ablation);
  const auto ws = parse_list(windows, "--windows");
  const auto ks = parse_list(kernels, "--kernels");
  const auto recs = load_data(cfg.data);
  const auto cells = sweep([&](std::size_t T) { return build_dataset(recs, T, cfg.stride); }, ws, ks, cfg.cv);
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "sweep.csv", sweep_csv(cells));
  for (const auto& cell : cells) {
    if (!cell.ok) std::cerr << "window " << cell.window << ", kernel " << cell.kernel << ": " << cell.error << "\n";
  }
  std::cout << sweep_csv(cells);
  return ok;
}

int cmd_export_embeddings(const Common& c) {
  const Checkpoint ck = require_checkpoint(c.checkpoint);
  const RunConfig cfg = ck.run_config();
  const Dataset ds = dataset_for(cfg, c.data.empty() ? cfg.data : c.data);
  Model model = ck.to_model();
  const Predictions p = predict(model, ds, all_windows(ds));
  const std::size_t d = p.z_v.size(1);
  std::ostringstream os;
  os.precision(9);
  os << "id,label";
  for (std::size_t j = 0; j < d; ++j) os << ",z_p" << j;
  for (std::size_t j = 0; j < d; ++j) os << ",z_v" << j;
  os << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const WindowRef& w = ds.windows[i];
    os << ds.subjects[w.subject].subject_id << ':' << w.start << ',' << p.labels[i];
    for (std::size_t j = 0; j < d; ++j) os << ',' << p.z_p.data()[i * d + j];
    for (std::size_t j = 0; j < d; ++j) os << ',' << p.z_v.data()[i * d + j];
    os << '\n';
  }
  fs::path out = c.out;
  if (fs::is_directory(out)) out /= "embeddings.csv";
  write_text(out, os.str());
  return ok;
}

int cmd_export_graph(const Common& c) {
  const Checkpoint ck = require_checkpoint(c.checkpoint);
  const Model model = ck.to_model();
  fs::create_directories(c.out);
  for (std::size_t m = 0; m < 3; ++m) {
    const Tensor a = model.graph(m).adjacency().effective();
    const std::size_t n = a.size(0);
    std::ostringstream os;
    os.precision(9);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) os << (j ? "," : "") << a.data()[i * n + j];
      os << '\n';
    }
    write_text(fs::path(c.out) / ("adjacency_" + std::string(modality_name(kSensorModalities[m])) + ".csv"),
               os.str());
  }
  return ok;
}

int cmd_gen_data(const Common& c) {
  if (c.data.rfind("synthetic:", 0) != 0) throw ConfigError("gen-data needs --data synthetic:SPEC");
  const auto recs = load_data(c.data);
  for (const auto& r : recs) save_recording(r, fs::path(c.out) / ("subject_" + r.subject_id));
  std::cout << "wrote " << recs.size() << " subjects to " << c.out << "\n";
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Personalized cybersickness prediction from VR video with sensor-aligned training"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "run configuration (key = value)");
    sub->add_option("--data", c.data, "recording directory or synthetic:SPEC");
    sub->add_option("--out", c.out, "output directory or file");
    sub->add_option("--ablation", c.ablation, "comma-separated ablation flags");
    sub->add_option("--seed", c.seed, "overrides seed and train.seed");
    sub->add_option("--checkpoint", c.checkpoint, "checkpoint file");
  };
  bool cv = false;
  std::size_t samples = 1000, warmup = 50;
  std::string windows = "150,300", kernels = "3,5";
  auto* train = app.add_subcommand("train", "train on all windows, write checkpoint and metrics");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint, or cross-validate with --cv");
  eval->add_flag("--cv", cv, "subject-grouped cross-validation from --config");
  auto* strip = app.add_subcommand("strip", "drop sensor-branch tensors from a checkpoint");
  auto* bench = app.add_subcommand("bench", "batch-1 latency of the video path");
  bench->add_option("--samples", samples, "timed samples (>= 10)");
  bench->add_option("--warmup", warmup, "untimed warmup iterations");
  auto* sw = app.add_subcommand("sweep", "window x kernel grid of cross-validation runs");
  sw->add_option("--windows", windows, "window sizes, e.g. 150,300");
  sw->add_option("--kernels", kernels, "difference kernel sizes 2k+1, e.g. 3,5");
  auto* emb = app.add_subcommand("export-embeddings", "z_p and z_v per window as CSV");
  auto* graph = app.add_subcommand("export-graph", "effective adjacency matrices as CSV");
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset in the recording layout");
  for (auto* s : {train, eval, strip, bench, sw, emb, graph, gen}) common(s);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }
  try {
    if (*train) return cmd_train(c);
    if (*eval) return cmd_eval(c, cv);
    if (*strip) return cmd_strip(c);
    if (*bench) return cmd_bench(c, samples, warmup);
    if (*sw) return cmd_sweep(c, windows, kernels);
    if (*emb) return cmd_export_embeddings(c);
    if (*graph) return cmd_export_graph(c);
    if (*gen) return cmd_gen_data(c);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config;
  } catch (const ContractError& e) {
    std::cerr << "invalid request: " << e.what() << "\n";
    return config;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return numeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return io;
  }
  return usage;
}

}  // namespace ptgnn::cli
