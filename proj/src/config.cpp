#include "ptgnn/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

PTGNN_NAMESPACE_BEGIN

namespace {

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) { return to_size(key, v); }

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// stages as "16x5:2,32x3:2" (channels x kernel : pool)
std::string stages_str(const std::vector<EncoderStage>& st) {
  std::string s;
  for (const auto& e : st) {
    if (!s.empty()) s += ',';
    s += std::to_string(e.channels) + "x" + std::to_string(e.kernel) + ":" + std::to_string(e.pool);
  }
  return s;
}

std::vector<EncoderStage> parse_stages(const std::string& key, const std::string& v) {
  std::vector<EncoderStage> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto x = item.find('x'), c = item.find(':');
    if (x == std::string::npos || c == std::string::npos || c < x) {
      throw ConfigError(key + ": stage '" + item + "' is not CHANNELSxKERNEL:POOL");
    }
    EncoderStage st;
    st.channels = to_size(key, item.substr(0, x));
    st.kernel = to_size(key, item.substr(x + 1, c - x - 1));
    st.pool = to_size(key, item.substr(c + 1));
    out.push_back(st);
  }
  if (out.empty()) throw ConfigError(key + ": at least one stage is required");
  return out;
}

struct Field {
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::map<std::string, Field> fields(RunConfig& c) {
  std::map<std::string, Field> f;
  auto size_field = [&](const std::string& k, std::size_t& ref) {
    f[k] = {[&ref] { return std::to_string(ref); }, [&ref, k](const std::string& v) { ref = to_size(k, v); }};
  };
  auto u64_field = [&](const std::string& k, std::uint64_t& ref) {
    f[k] = {[&ref] { return std::to_string(ref); }, [&ref, k](const std::string& v) { ref = to_u64(k, v); }};
  };
  auto real_field = [&](const std::string& k, real& ref) {
    f[k] = {[&ref] { return fmt(ref); }, [&ref, k](const std::string& v) { ref = static_cast<real>(to_double(k, v)); }};
  };
  auto double_field = [&](const std::string& k, double& ref) {
    f[k] = {[&ref] { return fmt(ref); }, [&ref, k](const std::string& v) { ref = to_double(k, v); }};
  };
  auto bool_field = [&](const std::string& k, bool& ref) {
    f[k] = {[&ref] { return std::string(ref ? "true" : "false"); },
            [&ref, k](const std::string& v) { ref = to_bool(k, v); }};
  };
  f["data.source"] = {[&c] { return c.data; }, [&c](const std::string& v) { c.data = v; }};
  size_field("data.window", c.window);
  size_field("data.stride", c.stride);
  u64_field("seed", c.cv.model.seed);

  ModelConfig& m = c.cv.model;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string p = "encoder." + std::string(modality_name(kSensorModalities[i]));
    EncoderConfig& e = m.encoders[i];
    f[p + ".stages"] = {[&e] { return stages_str(e.stages); },
                        [&e, p](const std::string& v) { e.stages = parse_stages(p + ".stages", v); }};
    real_field(p + ".dropout", e.dropout);
  }
  size_field("graph.hidden", m.graph.hidden);
  size_field("graph.out", m.graph.out);
  bool_field("graph.normalized", m.graph.normalized);

  size_field("diffattn.d", m.dae.d);
  size_field("diffattn.heads", m.dae.heads);
  size_field("diffattn.k", m.dae.k);
  f["diffattn.variant"] = {
      [&m] { return std::string(m.dae.variant == AttentionVariant::difference ? "difference" : "standard"); },
      [&m](const std::string& v) {
        if (v == "difference") m.dae.variant = AttentionVariant::difference;
        else if (v == "standard") m.dae.variant = AttentionVariant::standard;
        else throw ConfigError("diffattn.variant: expected difference or standard, got '" + v + "'");
      }};
  bool_field("diffattn.concat_difference", m.dae.concat_difference);
  real_field("diffattn.lambda_logit_init", m.dae.lambda_logit_init);
  real_field("diffattn.inter_modality_weight", m.dae.inter_modality_weight);
  size_field("diffattn.ffn_mult", m.dae.ffn_mult);

  VideoConfig& vc = m.video;
  f["video.backbone"] = {[&vc] { return std::string(backbone_name(vc.backbone)); },
                         [&vc](const std::string& v) {
                           try {
                             vc.backbone = parse_backbone(v);
                           } catch (const std::exception&) {
                             throw ConfigError("video.backbone: expected linear or tinyconv, got '" + v + "'");
                           }
                         }};
  size_field("video.segments", vc.segments);
  size_field("video.feature_dim", vc.feature_dim);
  size_field("video.hidden", vc.hidden);
  size_field("video.out_dim", vc.out_dim);
  size_field("video.frame_h", vc.frame_h);
  size_field("video.frame_w", vc.frame_w);
  size_field("video.frame_c", vc.frame_c);
  size_field("video.conv1", vc.conv1_channels);
  size_field("video.conv2", vc.conv2_channels);

  TrainOptions& t = c.cv.train;
  real_field("loss.beta", t.beta);
  bool_field("loss.bidirectional", t.bidirectional);
  size_field("train.epochs", t.epochs);
  size_field("train.batch_size", t.batch_size);
  real_field("train.lr", t.adam.lr);
  real_field("train.beta1", t.adam.beta1);
  real_field("train.beta2", t.adam.beta2);
  size_field("train.patience", t.patience);
  double_field("train.val_fraction", t.val_fraction);
  u64_field("train.seed", t.seed);

  size_field("eval.folds", c.cv.folds);
  u64_field("eval.fold_seed", c.cv.fold_seed);
  size_field("eval.parallel_folds", c.cv.parallel_folds);
  f["ablation"] = {[&c] { return c.cv.ablation.str(); },
                   [&c](const std::string& v) { c.cv.ablation = Ablation::parse(v); }};
  return f;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto f = fields(*this);
  auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown key '" + key + "'");
  it->second.set(value);
}

std::vector<std::string> RunConfig::keys() const {
  RunConfig copy = *this;
  std::vector<std::string> out;
  for (const auto& [k, v] : fields(copy)) out.push_back(k);
  return out;
}

std::string RunConfig::canonical() const {
  RunConfig copy = *this;
  std::string s;
  for (const auto& [k, v] : fields(copy)) s += k + " = " + v.get() + "\n";
  return s;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
  return buf;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig c;
  auto f = fields(c);
  std::vector<std::string> errors;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(n) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = f.find(key);
    if (it == f.end()) {
      errors.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    if (!seen.insert(key).second) {
      errors.push_back(where + "key '" + key + "' set twice");
      continue;
    }
    try {
      it->second.set(value);
    } catch (const ConfigError& e) {
      errors.push_back(where + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

SyntheticSpec RunConfig::synthetic_spec() const {
  if (!synthetic()) throw ConfigError("data.source is not a synthetic spec");
  return parse_synthetic_spec(data.substr(10));
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  };
  check([&] {
    if (window == 0) throw ConfigError("data.window must be positive");
  });
  check([&] {
    if (stride == 0) throw ConfigError("data.stride must be positive");
  });
  check([&] {
    if (synthetic()) synthetic_spec();
  });
  check([&] {
    if (!synthetic() && data.empty()) throw ConfigError("data.source is empty");
  });
  if (window > 0) {
    const std::size_t fd = synthetic() ? [&] {
      try {
        return synthetic_spec().frame_dim;
      } catch (const ConfigError&) {
        return cv.model.video.feature_dim;
      }
    }()
                                       : cv.model.video.feature_dim;
    check([&] { validate_settings(cv, window, fd); });
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }
}

std::vector<SubjectRecording> load_data(const std::string& source) {
  if (source.rfind("synthetic:", 0) == 0) return generate_synthetic(parse_synthetic_spec(source.substr(10)));
  return load_recordings(source);
}

PTGNN_NAMESPACE_END
