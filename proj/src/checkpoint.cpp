#include "ptgnn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"

PTGNN_NAMESPACE_BEGIN

namespace {

constexpr char kMagic[8] = {'P', 'T', 'G', 'N', 'N', 'C', 'K', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* b) {
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

// Payload scalars are stored at the build's precision.
constexpr const char* kDtype = sizeof(real) == 8 ? "float64" : "float32";

template <class F, class U>
void put_scalar(std::string& out, F v) {
  U u;
  std::memcpy(&u, &v, sizeof u);
  for (std::size_t i = 0; i < sizeof u; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <class F, class U>
F get_scalar(const unsigned char* b) {
  U u = 0;
  for (std::size_t i = 0; i < sizeof u; ++i) u |= U(b[i]) << (8 * i);
  F v;
  std::memcpy(&v, &u, sizeof v);
  return v;
}

}  // namespace

bool is_video_path_tensor(const std::string& name) {
  for (const char* p : {"video.", "classifier.", "norm.video."}) {
    if (name.rfind(p, 0) == 0) return true;
  }
  return false;
}

Checkpoint Checkpoint::from_model(const Model& model, const RunConfig& cfg) {
  Checkpoint ck;
  ck.config = cfg.canonical();
  for (const auto& nt : model.params().all()) {
    CheckpointTensor t;
    t.name = nt.name;
    t.shape = nt.tensor.shape();
    t.learnable = model.params().is_learnable(nt.name);
    for (real v : nt.tensor.data()) t.values.push_back(v);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

RunConfig Checkpoint::run_config() const { return RunConfig::parse(config, "checkpoint config"); }

std::string Checkpoint::config_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config)));
  return buf;
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::size_t Checkpoint::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  using nlohmann::json;
  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["config_hash"] = config_hash();
  manifest["config"] = config;
  manifest["stripped"] = stripped;
  json list = json::array();
  std::uint64_t offset = 0;
  std::set<std::string> names;
  for (const auto& t : tensors) {
    if (!names.insert(t.name).second) throw CheckpointError("duplicate tensor name '" + t.name + "'");
    const std::uint64_t bytes = t.values.size() * sizeof(real);
    list.push_back({{"name", t.name},
                    {"shape", t.shape},
                    {"dtype", kDtype},
                    {"offset", offset},
                    {"bytes", bytes},
                    {"learnable", t.learnable}});
    offset += bytes;
  }
  manifest["tensors"] = list;
  const std::string m = manifest.dump();
  std::string out(kMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(m.size()));
  out += m;
  out.reserve(out.size() + offset);
  for (const auto& t : tensors) {
    for (real v : t.values) {
      if constexpr (sizeof(real) == 8) {
        put_scalar<double, std::uint64_t>(out, v);
      } else {
        put_scalar<float, std::uint32_t>(out, v);
      }
    }
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), {});
  const std::string what = "checkpoint " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw CheckpointError(what + ": bad magic");
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t mlen = get_u32(u + 8);
  if (12 + std::size_t(mlen) > bytes.size()) throw CheckpointError(what + ": truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(12, mlen));
  } catch (const json::exception& e) {
    throw CheckpointError(what + ": unreadable manifest: " + e.what());
  }
  Checkpoint ck;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(what + ": format version " + std::to_string(version) + ", this build reads " +
                            std::to_string(kCheckpointVersion));
    }
    ck.config = manifest.at("config").get<std::string>();
    ck.stripped = manifest.value("stripped", false);
    if (manifest.at("config_hash").get<std::string>() != ck.config_hash()) {
      throw CheckpointError(what + ": config hash does not match the stored config");
    }
    const std::size_t base = 12 + mlen;
    std::set<std::string> names;
    for (const auto& e : manifest.at("tensors")) {
      CheckpointTensor t;
      t.name = e.at("name").get<std::string>();
      if (!names.insert(t.name).second) throw CheckpointError(what + ": duplicate tensor '" + t.name + "'");
      t.shape = e.at("shape").get<Shape>();
      t.learnable = e.value("learnable", true);
      const std::string dtype = e.at("dtype").get<std::string>();
      if (dtype != "float32" && dtype != "float64") throw CheckpointError(what + ": unsupported dtype " + dtype);
      const std::size_t width = dtype == "float64" ? 8 : 4;
      const std::uint64_t off = e.at("offset").get<std::uint64_t>(), nb = e.at("bytes").get<std::uint64_t>();
      if (nb != shape_numel(t.shape) * width) {
        throw CheckpointError(what + ": size of '" + t.name + "' disagrees with its shape");
      }
      if (base + off + nb > bytes.size()) throw CheckpointError(what + ": payload truncated at '" + t.name + "'");
      t.values.resize(nb / width);
      const unsigned char* src = u + base + off;
      for (std::size_t i = 0; i < t.values.size(); ++i) {
        t.values[i] = width == 8 ? static_cast<real>(get_scalar<double, std::uint64_t>(src + 8 * i))
                                 : static_cast<real>(get_scalar<float, std::uint32_t>(src + 4 * i));
      }
      ck.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(what + ": malformed manifest: " + e.what());
  }
  return ck;
}

void Checkpoint::apply_to(ParameterSet& params, bool partial) const {
  std::set<std::string> covered;
  for (const auto& t : tensors) {
    auto target = params.find(t.name);
    if (!target) {
      if (partial) continue;
      throw CheckpointError("checkpoint tensor '" + t.name + "' has no counterpart in the model");
    }
    if (target->shape() != t.shape) {
      throw CheckpointError("checkpoint tensor '" + t.name + "' has shape " + shape_str(t.shape) + ", model expects " +
                            shape_str(target->shape()));
    }
    auto dst = target->data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<real>(t.values[i]);
    covered.insert(t.name);
  }
  if (!partial) {
    for (const auto& nt : params.all()) {
      if (!covered.count(nt.name)) throw CheckpointError("checkpoint lacks tensor '" + nt.name + "'");
    }
  }
}

Model Checkpoint::to_model() const {
  if (stripped) throw CheckpointError("stripped checkpoint holds only the video path");
  Model m(run_config().cv.model);
  apply_to(m.params());
  return m;
}

Checkpoint Checkpoint::strip() const {
  Checkpoint out;
  out.config = config;
  out.stripped = true;
  for (const auto& t : tensors) {
    if (is_video_path_tensor(t.name)) out.tensors.push_back(t);
  }
  return out;
}

InferenceEngine::InferenceEngine(const Checkpoint& ck) {
  const RunConfig cfg = ck.run_config();
  video_cfg_ = cfg.cv.model.video;
  branch_ = std::make_unique<VideoBranch>(video_cfg_, cfg.cv.model.dae.d, params_, cfg.cv.model.seed);
  for (const auto& nt : params_.all()) {
    const CheckpointTensor* t = ck.find(nt.name);
    if (!t) throw CheckpointError("checkpoint lacks video tensor '" + nt.name + "'");
    if (t->shape != nt.tensor.shape()) throw CheckpointError("video tensor '" + nt.name + "' has the wrong shape");
    Tensor handle = nt.tensor;
    auto dst = handle.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<real>(t->values[i]);
    accessed_.push_back(nt.name);
  }
  for (const char* n : {"norm.video.mean", "norm.video.inv_std"}) {
    const CheckpointTensor* t = ck.find(n);
    if (!t || t->values.size() != video_cfg_.feature_dim) throw CheckpointError(std::string("checkpoint lacks ") + n);
    auto& dst = std::string(n) == "norm.video.mean" ? mean_ : inv_std_;
    dst.assign(t->values.begin(), t->values.end());
    accessed_.push_back(n);
  }
}

Tensor InferenceEngine::logits(const Tensor& raw_clips) const {
  const std::size_t F = video_cfg_.feature_dim;
  if (raw_clips.dim() != 3 || raw_clips.size(2) != F) {
    throw DimensionError("inference: clips must be [B, S, " + std::to_string(F) + "], got " +
                         shape_str(raw_clips.shape()));
  }
  std::vector<real> v(raw_clips.data().begin(), raw_clips.data().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mean_[i % F]) * inv_std_[i % F];
  return branch_->forward(Tensor(raw_clips.shape(), std::move(v)), Mode::eval).logits;
}

int InferenceEngine::infer_level(std::span<const real> clip) const {
  const std::size_t S = video_cfg_.segments, F = video_cfg_.feature_dim;
  if (clip.size() != S * F) throw DimensionError("infer_level: clip must hold segments * feature_dim values");
  const Tensor l = logits(Tensor({1, S, F}, std::vector<real>(clip.begin(), clip.end())));
  return argmax_level(l.data().data());
}

PTGNN_NAMESPACE_END
