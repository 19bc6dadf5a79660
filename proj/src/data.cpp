#include "ptgnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

PTGNN_NAMESPACE_BEGIN

namespace fs = std::filesystem;

const std::vector<std::string>& eye_channel_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const char* side : {"l", "r", "c"}) {
      for (const char* part : {"gaze_origin", "gaze_dir"}) {
        for (const char* ax : {"x", "y", "z"}) n.push_back(std::string(part) + "_" + side + "_" + ax);
      }
    }
    for (const char* s : {"pupil_diam_l", "pupil_diam_r", "pupil_pos_l_x", "pupil_pos_l_y", "pupil_pos_r_x",
                          "pupil_pos_r_y", "openness_l", "openness_r", "fixation_x", "fixation_y", "fixation_z",
                          "vergence", "blink_l", "blink_r", "saccade_vel", "valid_l", "valid_r",
                          "convergence_dist", "gaze_yaw", "gaze_pitch"}) {
      n.emplace_back(s);
    }
    return n;
  }();
  return names;
}

const std::vector<std::string>& head_channel_names() {
  static const std::vector<std::string> names{"pos_x",  "pos_y",  "pos_z",  "euler_x", "euler_y", "euler_z",
                                              "gyro_x", "gyro_y", "gyro_z", "acc_x",   "acc_y",   "acc_z"};
  return names;
}

const std::vector<std::string>& phy_channel_names() {
  static const std::vector<std::string> names{"eda", "bvp", "skt"};
  return names;
}

namespace {

void check_stream(const Stream& s, const char* field, std::size_t channels, double rate) {
  if (s.width() != channels) {
    throw SchemaError(std::string(field) + ": " + std::to_string(s.width()) + " channels, expected " +
                      std::to_string(channels));
  }
  if (std::abs(s.rate - rate) > 1e-6 * rate) {
    std::ostringstream os;
    os << field << ": sampling rate " << s.rate << " Hz, expected " << rate << " Hz";
    throw SchemaError(os.str());
  }
  if (s.values.size() % channels != 0) throw SchemaError(std::string(field) + ": ragged sample rows");
}

}  // namespace

void validate_schema(const SubjectRecording& rec) {
  check_stream(rec.eye, "eye", schema_node_count(Modality::eye), kMotionRate);
  check_stream(rec.head, "head", schema_node_count(Modality::head), kMotionRate);
  check_stream(rec.phy, "phy", schema_node_count(Modality::phy), kPhyRate);
  if (rec.frames.dim == 0 || rec.frames.values.size() % rec.frames.dim != 0) {
    throw SchemaError("frames: feature dimension must be positive and divide the payload");
  }
  for (std::size_t i = 0; i < rec.labels.size(); ++i) {
    if (rec.labels[i] < 0 || rec.labels[i] > 10) {
      throw SchemaError("labels: value " + std::to_string(rec.labels[i]) + " at second " + std::to_string(i) +
                        " outside 0..10");
    }
  }
}

Stream downsample_motion(const Stream& s, std::size_t interval) {
  if (interval == 0) throw DataError("downsample_motion: interval must be positive");
  const std::size_t n = s.samples(), C = s.width();
  if (n < interval) {
    throw DataError("downsample_motion: stream of " + std::to_string(n) + " samples is shorter than one interval of " +
                    std::to_string(interval));
  }
  const std::size_t out_n = n / interval;
  Stream out;
  out.rate = s.rate / static_cast<double>(interval);
  for (const auto& c : s.channels) {
    out.channels.push_back(c + "_mean");
    out.channels.push_back(c + "_std");
  }
  out.values.resize(out_n * 2 * C);
  for (std::size_t k = 0; k < out_n; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      double m = 0;
      for (std::size_t i = 0; i < interval; ++i) m += s.at(k * interval + i, c);
      m /= static_cast<double>(interval);
      double v = 0;
      for (std::size_t i = 0; i < interval; ++i) {
        const double d = s.at(k * interval + i, c) - m;
        v += d * d;
      }
      v /= static_cast<double>(interval);
      out.values[(k * C + c) * 2] = static_cast<real>(m);
      out.values[(k * C + c) * 2 + 1] = static_cast<real>(std::sqrt(v));
    }
  }
  return out;
}

PreparedSubject prepare(const SubjectRecording& rec) {
  validate_schema(rec);
  const Stream eye = downsample_motion(rec.eye), head = downsample_motion(rec.head);
  PreparedSubject p;
  p.subject_id = rec.subject_id;
  p.seconds = std::min({eye.samples(), head.samples(), rec.phy.samples(), rec.labels.size(),
                        rec.frames.frames() / static_cast<std::size_t>(kFrameRate)});
  if (p.seconds == 0) throw DataError("subject " + rec.subject_id + ": empty recording");
  auto take = [&](const Stream& s) {
    return std::vector<real>(s.values.begin(), s.values.begin() + static_cast<std::ptrdiff_t>(p.seconds * s.width()));
  };
  p.sensors = {take(eye), take(head), take(rec.phy)};
  p.frames = rec.frames;
  p.labels.assign(rec.labels.begin(), rec.labels.begin() + static_cast<std::ptrdiff_t>(p.seconds));
  return p;
}

std::vector<WindowRef> make_windows(const PreparedSubject& s, std::size_t subject_index, std::size_t T,
                                    std::size_t stride) {
  if (T == 0 || stride == 0) throw DataError("make_windows: window and stride must be positive");
  if (s.seconds == 0) throw DataError("make_windows: subject " + s.subject_id + " has an empty recording");
  if (T > s.seconds) {
    throw DataError("make_windows: window of " + std::to_string(T) + " s exceeds the " + std::to_string(s.seconds) +
                    " s recording of subject " + s.subject_id);
  }
  std::vector<WindowRef> out;
  const std::size_t count = (s.seconds - T) / stride + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = i * stride;
    out.push_back({subject_index, start, s.labels[start + T - 1]});
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> y;
  for (const auto& w : windows) y.push_back(w.label);
  return y;
}

Dataset build_dataset(const std::vector<SubjectRecording>& recs, std::size_t T, std::size_t stride) {
  if (recs.empty()) throw DataError("dataset has no subjects");
  Dataset ds;
  ds.window = T;
  for (const auto& r : recs) {
    ds.subjects.push_back(prepare(r));
    auto w = make_windows(ds.subjects.back(), ds.subjects.size() - 1, T, stride);
    ds.windows.insert(ds.windows.end(), w.begin(), w.end());
  }
  const std::size_t F = ds.subjects[0].frames.dim;
  for (const auto& s : ds.subjects) {
    if (s.frames.dim != F) throw SchemaError("frames: subjects disagree on the feature dimension");
  }
  return ds;
}

Dataset shuffle_labels(Dataset ds, std::uint64_t seed) {
  std::vector<int> y = ds.labels();
  std::mt19937_64 rng(mix_seed(seed, fnv1a("shuffle_labels")));
  std::shuffle(y.begin(), y.end(), rng);
  for (std::size_t i = 0; i < y.size(); ++i) ds.windows[i].label = y[i];
  return ds;
}

namespace {

void finish_stats(const std::vector<double>& sum, const std::vector<double>& sq, double n, std::vector<real>& mean,
                  std::vector<real>& inv_std) {
  mean.resize(sum.size());
  inv_std.resize(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double m = n > 0 ? sum[i] / n : 0.0;
    const double var = n > 0 ? std::max(0.0, sq[i] / n - m * m) : 1.0;
    const double sd = std::sqrt(var);
    mean[i] = static_cast<real>(m);
    inv_std[i] = static_cast<real>(sd > 1e-6 ? 1.0 / sd : 1.0);
  }
}

}  // namespace

Normalizer Normalizer::fit(const Dataset& ds, const std::vector<std::size_t>& train_windows) {
  std::set<std::size_t> subjects;
  for (auto i : train_windows) subjects.insert(ds.windows.at(i).subject);
  if (subjects.empty()) throw DataError("normalizer: no training windows");
  Normalizer n;
  for (std::size_t m = 0; m < 3; ++m) {
    const std::size_t width = schema_node_count(kSensorModalities[m]) * kSensorDepth[m];
    std::vector<double> sum(width, 0), sq(width, 0);
    double count = 0;
    for (auto s : subjects) {
      const auto& v = ds.subjects[s].sensors[m];
      for (std::size_t k = 0; k < v.size(); ++k) {
        sum[k % width] += v[k];
        sq[k % width] += double(v[k]) * v[k];
      }
      count += static_cast<double>(v.size() / width);
    }
    finish_stats(sum, sq, count, n.mean[m], n.inv_std[m]);
  }
  const std::size_t F = ds.subjects[0].frames.dim;
  std::vector<double> sum(F, 0), sq(F, 0);
  double count = 0;
  for (auto s : subjects) {
    const auto& v = ds.subjects[s].frames.values;
    for (std::size_t k = 0; k < v.size(); ++k) {
      sum[k % F] += v[k];
      sq[k % F] += double(v[k]) * v[k];
    }
    count += static_cast<double>(v.size() / F);
  }
  finish_stats(sum, sq, count, n.video_mean, n.video_inv_std);
  return n;
}

Normalizer Normalizer::identity(const ModelConfig& cfg) {
  Normalizer n;
  for (std::size_t m = 0; m < 3; ++m) {
    const std::size_t width = cfg.nodes[m] * cfg.encoders[m].in_depth;
    n.mean[m].assign(width, 0);
    n.inv_std[m].assign(width, 1);
  }
  n.video_mean.assign(cfg.video.feature_dim, 0);
  n.video_inv_std.assign(cfg.video.feature_dim, 1);
  return n;
}

namespace {

void put_buffer(ParameterSet& params, const std::string& name, const std::vector<real>& v) {
  if (auto t = params.find(name)) {
    if (t->numel() != v.size()) {
      throw DimensionError(name + ": model expects " + std::to_string(t->numel()) + " statistics, got " +
                           std::to_string(v.size()));
    }
    std::copy(v.begin(), v.end(), t->data().begin());
  } else {
    params.add_buffer(name, Tensor({v.size()}, v));
  }
}

std::vector<real> get_buffer(const ParameterSet& params, const std::string& name) {
  auto t = params.find(name);
  if (!t) throw CheckpointError("missing normalization buffer '" + name + "'");
  return {t->data().begin(), t->data().end()};
}

}  // namespace

void Normalizer::export_to(ParameterSet& params) const {
  for (std::size_t m = 0; m < 3; ++m) {
    const std::string p = "norm." + std::string(modality_name(kSensorModalities[m]));
    put_buffer(params, p + ".mean", mean[m]);
    put_buffer(params, p + ".inv_std", inv_std[m]);
  }
  put_buffer(params, "norm.video.mean", video_mean);
  put_buffer(params, "norm.video.inv_std", video_inv_std);
}

Normalizer Normalizer::import_from(const ParameterSet& params) {
  Normalizer n;
  for (std::size_t m = 0; m < 3; ++m) {
    const std::string p = "norm." + std::string(modality_name(kSensorModalities[m]));
    if (params.contains(p + ".mean")) {
      n.mean[m] = get_buffer(params, p + ".mean");
      n.inv_std[m] = get_buffer(params, p + ".inv_std");
    }
  }
  n.video_mean = get_buffer(params, "norm.video.mean");
  n.video_inv_std = get_buffer(params, "norm.video.inv_std");
  return n;
}

std::vector<std::size_t> segment_frames(std::size_t start, std::size_t T, std::size_t segments) {
  std::vector<std::size_t> idx;
  const double span = static_cast<double>(T) * kFrameRate;
  const auto first = static_cast<std::size_t>(static_cast<double>(start) * kFrameRate);
  for (std::size_t s = 0; s < segments; ++s) {
    idx.push_back(first + static_cast<std::size_t>(std::floor((static_cast<double>(s) + 0.5) * span /
                                                              static_cast<double>(segments))));
  }
  return idx;
}

std::vector<real> window_clip(const Dataset& ds, std::size_t index, std::size_t segments) {
  const WindowRef& w = ds.windows.at(index);
  const FrameStream& fr = ds.subjects[w.subject].frames;
  std::vector<real> out;
  out.reserve(segments * fr.dim);
  for (auto f : segment_frames(w.start, ds.window, segments)) {
    if (f >= fr.frames()) throw DataError("window reads past the end of the frame stream");
    out.insert(out.end(), fr.values.begin() + static_cast<std::ptrdiff_t>(f * fr.dim),
               fr.values.begin() + static_cast<std::ptrdiff_t>((f + 1) * fr.dim));
  }
  return out;
}

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices, const Normalizer& norm,
                 std::size_t segments) {
  if (indices.empty()) throw ContractError("make_batch: empty batch");
  const std::size_t B = indices.size(), T = ds.window;
  Batch b;
  for (std::size_t m = 0; m < 3; ++m) {
    const std::size_t N = schema_node_count(kSensorModalities[m]), D = kSensorDepth[m], width = N * D;
    if (norm.mean[m].size() != width) throw DimensionError("make_batch: normalizer does not match the schema");
    std::vector<real> v(B * T * width);
    for (std::size_t i = 0; i < B; ++i) {
      const WindowRef& w = ds.windows.at(indices[i]);
      const auto& src = ds.subjects[w.subject].sensors[m];
      if ((w.start + T) * width > src.size()) throw DataError("window reads past the end of a sensor stream");
      for (std::size_t k = 0; k < T * width; ++k) {
        const std::size_t c = k % width;
        v[i * T * width + k] = (src[w.start * width + k] - norm.mean[m][c]) * norm.inv_std[m][c];
      }
    }
    b.sensors[m] = Tensor({B, T, N, D}, std::move(v));
  }
  const std::size_t F = ds.subjects[0].frames.dim;
  if (norm.video_mean.size() != F) throw DimensionError("make_batch: video normalizer does not match F");
  std::vector<real> clips;
  clips.reserve(B * segments * F);
  for (auto i : indices) {
    auto c = window_clip(ds, i, segments);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = (c[k] - norm.video_mean[k % F]) * norm.video_inv_std[k % F];
    clips.insert(clips.end(), c.begin(), c.end());
    b.labels.push_back(ds.windows[i].label);
  }
  b.clips = Tensor({B, segments, F}, std::move(clips));
  return b;
}

// ---------------------------------------------------------------------------
// synthetic data

void SyntheticSpec::validate() const {
  if (subjects == 0) throw ConfigError("synthetic.subjects must be positive");
  if (seconds == 0) throw ConfigError("synthetic.seconds must be positive");
  if (segment_seconds == 0) throw ConfigError("synthetic.segment must be positive");
  if (!(noise >= 0)) throw ConfigError("synthetic.noise must be non-negative");
  if (frame_dim < 4) throw ConfigError("synthetic.frame_dim must be at least 4");
  if (!(drift >= 0)) throw ConfigError("synthetic.drift must be non-negative");
  if (!(frame_noise >= 0)) throw ConfigError("synthetic.frame_noise must be non-negative");
  if (!(frame_signal >= 0)) throw ConfigError("synthetic.frame_signal must be non-negative");
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec s;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("synthetic spec: expected key=value, got '" + item + "'");
    const std::string k = item.substr(0, eq), v = item.substr(eq + 1);
    try {
      if (k == "subjects") s.subjects = std::stoul(v);
      else if (k == "seconds") s.seconds = std::stoul(v);
      else if (k == "segment") s.segment_seconds = std::stoul(v);
      else if (k == "noise") s.noise = static_cast<real>(std::stod(v));
      else if (k == "frame_dim") s.frame_dim = std::stoul(v);
      else if (k == "drift") s.drift = static_cast<real>(std::stod(v));
      else if (k == "frame_noise") s.frame_noise = static_cast<real>(std::stod(v));
      else if (k == "frame_signal") s.frame_signal = static_cast<real>(std::stod(v));
      else if (k == "seed") s.seed = std::stoull(v);
      else throw ConfigError("synthetic spec: unknown key '" + k + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("synthetic spec: bad value for '" + k + "': '" + v + "'");
    }
  }
  s.validate();
  return s;
}

namespace {

// Smooth content-driven trajectory: a sum of three slow sinusoids.
struct SlowWave {
  std::array<double, 3> freq{}, phase{}, amp{};
  double operator()(double t) const {
    double v = 0;
    for (std::size_t i = 0; i < 3; ++i) v += amp[i] * std::sin(2 * M_PI * freq[i] * t + phase[i]);
    return v;
  }
  static SlowWave draw(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> period(4.0, 20.0), ph(0, 2 * M_PI);
    SlowWave w;
    for (std::size_t i = 0; i < 3; ++i) {
      w.freq[i] = 1.0 / period(rng);
      w.phase[i] = ph(rng);
      w.amp[i] = 1.0 / 3.0;
    }
    return w;
  }
};

// Projection matrices shared by every subject of a dataset.
struct FrameBasis {
  std::size_t F;
  std::vector<double> severity;  // [F, 4]
  std::vector<double> scene;     // [F, 6]
  std::vector<double> view;      // [F, 3]
  std::vector<double> intensity; // [F]

  FrameBasis(std::size_t dim, std::uint64_t seed) : F(dim) {
    std::mt19937_64 rng(mix_seed(seed, fnv1a("frame_basis")));
    std::normal_distribution<double> n(0, 1);
    auto fill = [&](std::vector<double>& m, std::size_t cols) {
      m.resize(F * cols);
      for (auto& v : m) v = n(rng) / std::sqrt(static_cast<double>(cols));
    };
    fill(severity, 4);
    fill(scene, 6);
    fill(view, 3);
    fill(intensity, 1);
  }
};

}  // namespace

SubjectTraits draw_traits(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sus(0.6, 1.4), ph(0, 2 * M_PI);
  std::normal_distribution<double> n(0, 1);
  SubjectTraits t;
  t.susceptibility = static_cast<real>(sus(rng));
  for (auto& v : t.eye_baseline) v = static_cast<real>(0.5 * n(rng));
  for (auto& v : t.head_baseline) v = static_cast<real>(0.5 * n(rng));
  for (auto& v : t.phy_baseline) v = static_cast<real>(0.5 * n(rng));
  for (auto& v : t.phy_drift) v = static_cast<real>(n(rng));
  t.jitter_phase = static_cast<real>(ph(rng));
  return t;
}

SubjectRecording synthesize_subject(const std::string& id, const SubjectTraits& traits,
                                    const std::vector<real>& intensity, const SyntheticSpec& spec,
                                    std::uint64_t seed) {
  spec.validate();
  const std::size_t L = intensity.size();
  if (L == 0) throw DataError("synthesize_subject: empty content");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0, 1);
  const double noise = spec.noise;

  SubjectRecording r;
  r.subject_id = id;
  r.labels.resize(L);
  std::vector<double> sev(L);
  for (std::size_t t = 0; t < L; ++t) {
    const double lv = std::round(10.0 * traits.susceptibility * intensity[t]);
    r.labels[t] = static_cast<int>(std::clamp(lv, 0.0, 10.0));
    sev[t] = r.labels[t] / 10.0;
  }

  const std::size_t n = L * kMotionInterval;
  // eye tracking
  {
    const auto& names = eye_channel_names();
    r.eye.rate = kMotionRate;
    r.eye.channels = names;
    const std::size_t C = names.size();
    std::vector<SlowWave> gaze;
    for (std::size_t c = 0; c < C; ++c) gaze.push_back(SlowWave::draw(rng));
    r.eye.values.resize(n * C);
    for (std::size_t i = 0; i < n; ++i) {
      const double tau = static_cast<double>(i) / kMotionRate;
      const double a = sev[i / kMotionInterval];
      for (std::size_t c = 0; c < C; ++c) {
        double x = traits.eye_baseline[c] + 0.5 * gaze[c](tau);
        if (c < 18) x += (0.02 + 0.2 * a) * gauss(rng);  // gaze dispersion
        else if (c < 20) x += 0.5 * a;                    // pupil dilation
        else if (c == 24 || c == 25) x -= 0.3 * a;        // eye openness
        r.eye.values[i * C + c] = static_cast<real>(x + noise * gauss(rng));
      }
    }
  }
  // head motion; acc_z carries the planted jitter
  {
    r.head.rate = kMotionRate;
    r.head.channels = head_channel_names();
    const std::size_t C = r.head.channels.size();
    std::vector<SlowWave> motion;
    for (std::size_t c = 0; c < C; ++c) motion.push_back(SlowWave::draw(rng));
    r.head.values.resize(n * C);
    for (std::size_t i = 0; i < n; ++i) {
      const double tau = static_cast<double>(i) / kMotionRate;
      const int level = r.labels[i / kMotionInterval];
      for (std::size_t c = 0; c < C; ++c) {
        double x = traits.head_baseline[c];
        if (c == kJitterChannel) {
          x += kJitterAmplitude * (1 + level) * std::sin(2 * M_PI * kJitterHz * tau + traits.jitter_phase);
        } else {
          x += 0.3 * motion[c](tau) + 0.05 * level / 10.0 * gauss(rng);
        }
        r.head.values[i * C + c] = static_cast<real>(x + noise * gauss(rng));
      }
    }
  }
  // physiology at 1 Hz
  {
    r.phy.rate = kPhyRate;
    r.phy.channels = phy_channel_names();
    r.phy.values.resize(L * 3);
    const double drift = spec.drift;
    for (std::size_t t = 0; t < L; ++t) {
      const double minutes = static_cast<double>(t) / 60.0, a = sev[t];
      const double eda = 2.0 + traits.phy_baseline[0] + drift * traits.phy_drift[0] * minutes + 0.8 * a;
      const double bvp = traits.phy_baseline[1] + 0.5 * a + 0.1 * std::sin(2 * M_PI * static_cast<double>(t) / 12.0);
      const double skt = traits.phy_baseline[2] + drift * traits.phy_drift[2] * minutes - 0.4 * a;
      r.phy.values[t * 3 + 0] = static_cast<real>(eda + noise * gauss(rng));
      r.phy.values[t * 3 + 1] = static_cast<real>(bvp + noise * gauss(rng));
      r.phy.values[t * 3 + 2] = static_cast<real>(skt + noise * gauss(rng));
    }
  }
  // frame features: the viewport follows the subject's head, so the
  // severity-dependent shake shows up next to scene content
  {
    const FrameBasis basis(spec.frame_dim, spec.seed);
    const double frame_noise = noise * spec.frame_noise;
    const std::size_t F = spec.frame_dim, frames = L * static_cast<std::size_t>(kFrameRate);
    std::vector<SlowWave> scene;
    for (std::size_t k = 0; k < 6; ++k) scene.push_back(SlowWave::draw(rng));
    r.frames.dim = F;
    r.frames.values.resize(frames * F);
    std::vector<double> fixed(F);
    for (std::size_t f = 0; f < F; ++f) {
      double v = 0;
      for (std::size_t k = 0; k < 3; ++k) v += basis.view[f * 3 + k] * traits.head_baseline[k];
      fixed[f] = v;
    }
    for (std::size_t i = 0; i < frames; ++i) {
      const double tau = static_cast<double>(i) / kFrameRate;
      const std::size_t sec = i / static_cast<std::size_t>(kFrameRate);
      const double a = sev[sec];
      const std::array<double, 4> h{a - 0.5, (a - 0.5) * (a - 0.5), std::sin(M_PI * a), std::cos(M_PI * a)};
      std::array<double, 6> sc;
      for (std::size_t k = 0; k < 6; ++k) sc[k] = scene[k](tau);
      for (std::size_t f = 0; f < F; ++f) {
        double v = fixed[f] + basis.intensity[f] * intensity[sec];
        for (std::size_t k = 0; k < 4; ++k) v += spec.frame_signal * basis.severity[f * 4 + k] * h[k];
        for (std::size_t k = 0; k < 6; ++k) v += basis.scene[f * 6 + k] * sc[k];
        r.frames.values[i * F + f] = static_cast<real>(v + frame_noise * gauss(rng));
      }
    }
  }
  return r;
}

std::vector<SubjectRecording> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<SubjectRecording> out;
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    const std::uint64_t sseed = mix_seed(spec.seed, s + 1);
    const SubjectTraits traits = draw_traits(mix_seed(sseed, 1));
    std::mt19937_64 rng(mix_seed(sseed, 2));
    // Balanced levels: each block of 11 segments visits every level once.
    std::vector<int> levels;
    const std::size_t segments = (spec.seconds + spec.segment_seconds - 1) / spec.segment_seconds;
    while (levels.size() < segments) {
      std::vector<int> block(11);
      std::iota(block.begin(), block.end(), 0);
      std::shuffle(block.begin(), block.end(), rng);
      levels.insert(levels.end(), block.begin(), block.end());
    }
    std::vector<real> intensity(spec.seconds);
    for (std::size_t t = 0; t < spec.seconds; ++t) {
      intensity[t] = static_cast<real>(levels[t / spec.segment_seconds] / (10.0 * traits.susceptibility));
    }
    char id[32];
    std::snprintf(id, sizeof id, "%02zu", s + 1);
    out.push_back(synthesize_subject(id, traits, intensity, spec, mix_seed(sseed, 3)));
  }
  return out;
}

int closed_form_level(const SubjectRecording& rec, std::size_t second) {
  const std::size_t base = second * kMotionInterval;
  if (base + kMotionInterval > rec.head.samples()) throw DataError("closed_form_level: second out of range");
  double m = 0, v = 0;
  for (std::size_t i = 0; i < kMotionInterval; ++i) m += rec.head.at(base + i, kJitterChannel);
  m /= kMotionInterval;
  for (std::size_t i = 0; i < kMotionInterval; ++i) {
    const double d = rec.head.at(base + i, kJitterChannel) - m;
    v += d * d;
  }
  const double sd = std::sqrt(v / kMotionInterval);
  return static_cast<int>(std::clamp(std::round(std::sqrt(2.0) * sd / kJitterAmplitude - 1), 0.0, 10.0));
}

// ---------------------------------------------------------------------------
// files

namespace {

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt_real(real v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_csv(const fs::path& path, const Stream& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "time_s";
  for (const auto& c : s.channels) out << ',' << c;
  out << '\n';
  std::string line;
  for (std::size_t i = 0; i < s.samples(); ++i) {
    line = fmt(static_cast<double>(i) / s.rate);
    for (std::size_t c = 0; c < s.width(); ++c) {
      line += ',';
      line += fmt_real(s.at(i, c));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_num(const char* b, const char* e, const std::string& what) {
  T v{};
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e) throw SchemaError(what + ": malformed number '" + std::string(b, e) + "'");
  return v;
}

Stream read_csv(const fs::path& path, const char* field, double expected_rate, std::size_t expected_channels) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(std::string(field) + ": empty file");
  auto header = split(line);
  if (header.empty() || header[0] != "time_s") throw SchemaError(std::string(field) + ": first column must be time_s");
  Stream s;
  s.channels.assign(header.begin() + 1, header.end());
  if (s.width() != expected_channels) {
    throw SchemaError(std::string(field) + ": " + std::to_string(s.width()) + " channels, expected " +
                      std::to_string(expected_channels));
  }
  std::vector<double> times;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    if (end > p && end[-1] == '\r') --end;
    std::size_t col = 0;
    const std::string where = std::string(field) + " row " + std::to_string(row);
    while (true) {
      const char* q = std::find(p, end, ',');
      if (col == 0) times.push_back(parse_num<double>(p, q, where));
      else s.values.push_back(parse_num<real>(p, q, where));
      ++col;
      if (q == end) break;
      p = q + 1;
    }
    if (col != expected_channels + 1) {
      throw SchemaError(where + ": " + std::to_string(col - 1) + " values, expected " + std::to_string(expected_channels));
    }
  }
  s.rate = expected_rate;
  if (times.size() >= 2) {
    const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    const double rate = 1.0 / dt;
    if (std::abs(rate - expected_rate) > 1e-3 * expected_rate) {
      std::ostringstream os;
      os << field << ": sampling rate " << rate << " Hz, expected " << expected_rate << " Hz";
      throw SchemaError(os.str());
    }
  }
  return s;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw SchemaError(what + ": truncated header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace

void write_ptgv(const fs::path& path, const FrameStream& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("PTGV1", 5);
  put_u32(out, static_cast<std::uint32_t>(frames.frames()));
  put_u32(out, static_cast<std::uint32_t>(frames.dim));
  for (real v : frames.values) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(out, u);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

FrameStream read_ptgv(std::istream& in, const std::string& what) {
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, "PTGV1", 5) != 0) throw SchemaError(what + ": not a PTGV1 clip");
  const std::uint32_t n = get_u32(in, what), F = get_u32(in, what);
  if (F == 0) throw SchemaError(what + ": zero feature dimension");
  FrameStream fs;
  fs.dim = F;
  fs.values.resize(std::size_t(n) * F);
  std::vector<unsigned char> raw(fs.values.size() * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw SchemaError(what + ": payload shorter than " + std::to_string(n) + " x " + std::to_string(F) + " values");
  }
  for (std::size_t i = 0; i < fs.values.size(); ++i) {
    const unsigned char* b = &raw[i * 4];
    const std::uint32_t u = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                            std::uint32_t(b[3]) << 24;
    float f;
    std::memcpy(&f, &u, 4);
    fs.values[i] = static_cast<real>(f);
  }
  return fs;
}

FrameStream read_ptgv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_ptgv(in, path.string());
}

void save_recording(const SubjectRecording& rec, const fs::path& dir) {
  validate_schema(rec);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_csv(dir / "eye.csv", rec.eye);
  write_csv(dir / "head.csv", rec.head);
  write_csv(dir / "phy.csv", rec.phy);
  write_ptgv(dir / "frames.ptgv", rec.frames);
  std::ofstream out(dir / "labels.csv");
  if (!out) throw IoError("cannot write " + (dir / "labels.csv").string());
  out << "time_s,label\n";
  for (std::size_t i = 0; i < rec.labels.size(); ++i) out << i << ',' << rec.labels[i] << '\n';
}

SubjectRecording load_recording(const fs::path& dir) {
  std::vector<std::string> missing;
  for (const char* f : {"eye.csv", "head.csv", "phy.csv", "frames.ptgv", "labels.csv"}) {
    if (!fs::exists(dir / f)) missing.emplace_back(f);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw SchemaError(dir.string() + ": missing stream(s): " + list);
  }
  SubjectRecording r;
  r.subject_id = dir.filename().string();
  if (r.subject_id.rfind("subject_", 0) == 0) r.subject_id = r.subject_id.substr(8);
  r.eye = read_csv(dir / "eye.csv", "eye", kMotionRate, schema_node_count(Modality::eye));
  r.head = read_csv(dir / "head.csv", "head", kMotionRate, schema_node_count(Modality::head));
  r.phy = read_csv(dir / "phy.csv", "phy", kPhyRate, schema_node_count(Modality::phy));
  r.frames = read_ptgv(dir / "frames.ptgv");
  std::ifstream in(dir / "labels.csv");
  std::string line;
  std::getline(in, line);
  if (split(line) != std::vector<std::string>{"time_s", "label"}) throw SchemaError("labels: header must be time_s,label");
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cols = split(line);
    if (cols.size() != 2) throw SchemaError("labels: expected two columns, got '" + line + "'");
    times.push_back(parse_num<double>(cols[0].data(), cols[0].data() + cols[0].size(), "labels"));
    r.labels.push_back(parse_num<int>(cols[1].data(), cols[1].data() + cols[1].size(), "labels"));
  }
  if (times.size() >= 2) {
    const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    if (std::abs(dt - 1.0) > 1e-3) throw SchemaError("labels: expected one label per second");
  }
  validate_schema(r);
  return r;
}

std::vector<SubjectRecording> load_recordings(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("data directory " + root.string() + " does not exist");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().rfind("subject_", 0) == 0) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no subject_* directories under " + root.string());
  std::vector<SubjectRecording> out;
  for (const auto& d : dirs) out.push_back(load_recording(d));
  return out;
}

PTGNN_NAMESPACE_END
