#include "ptgnn/video.hpp"

PTGNN_NAMESPACE_BEGIN

std::string_view backbone_name(Backbone b) { return b == Backbone::linear ? "linear" : "tinyconv"; }

Backbone parse_backbone(std::string_view name) {
  if (name == "linear") return Backbone::linear;
  if (name == "tinyconv") return Backbone::tinyconv;
  throw ConfigError("video.backbone must be 'linear' or 'tinyconv', got '" + std::string(name) + "'");
}

void VideoConfig::validate() const {
  if (segments == 0) throw ConfigError("video.segments must be positive");
  if (backbone == Backbone::linear) {
    if (feature_dim == 0 || hidden == 0 || out_dim == 0) {
      throw ConfigError("video.feature_dim, video.hidden and video.out_dim must be positive");
    }
  } else {
    if (frame_h < 4 || frame_w < 4 || frame_c == 0 || conv1_channels == 0 || conv2_channels == 0) {
      throw ConfigError("video: tinyconv needs frames of at least 4x4 and positive channel counts");
    }
    if (feature_dim != frame_h * frame_w * frame_c) {
      throw ConfigError("video.feature_dim = " + std::to_string(feature_dim) + " must equal frame_h*frame_w*frame_c = " +
                        std::to_string(frame_h * frame_w * frame_c) + " for the tinyconv backbone");
    }
  }
}

VideoBackbone::VideoBackbone(const VideoConfig& cfg, ParameterSet& params, const std::string& prefix,
                             std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.backbone == Backbone::linear) {
    const std::size_t F = cfg_.feature_dim, H = cfg_.hidden, O = cfg_.out_dim;
    w1_ = params.add(prefix + ".w1", glorot({F, H}, F, H, seed, prefix + ".w1"));
    b1_ = params.add(prefix + ".b1", Tensor::zeros({H}));
    w2_ = params.add(prefix + ".w2", glorot({H, O}, H, O, seed, prefix + ".w2"));
    b2_ = params.add(prefix + ".b2", Tensor::zeros({O}));
  } else {
    const std::size_t C = cfg_.frame_c, c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels;
    w1_ = params.add(prefix + ".conv1.weight", glorot({c1, C, 3, 3}, C * 9, c1 * 9, seed, prefix + ".conv1.weight"));
    b1_ = params.add(prefix + ".conv1.bias", Tensor::zeros({c1}));
    w2_ = params.add(prefix + ".conv2.weight",
                     glorot({c2, c1, 3, 3}, c1 * 9, c2 * 9, seed, prefix + ".conv2.weight"));
    b2_ = params.add(prefix + ".conv2.bias", Tensor::zeros({c2}));
  }
}

Tensor VideoBackbone::segment_features(const Tensor& clips) const {
  if (clips.dim() != 3 || clips.size(2) != cfg_.feature_dim) {
    throw DimensionError("video: expected clips [B, S, " + std::to_string(cfg_.feature_dim) + "], got " +
                         shape_str(clips.shape()));
  }
  const std::size_t B = clips.size(0), S = clips.size(1);
  if (cfg_.backbone == Backbone::linear) {
    return add(matmul(relu(add(matmul(clips, w1_), b1_)), w2_), b2_);
  }
  const std::size_t H = cfg_.frame_h, W = cfg_.frame_w, C = cfg_.frame_c;
  Tensor x = permute(reshape(clips, {B * S, H, W, C}), {0, 3, 1, 2});
  x = relu(conv2d(x, w1_, b1_, 2, 1));
  x = relu(conv2d(x, w2_, b2_, 2, 1));
  const std::size_t c2 = x.size(1), hw = x.size(2) * x.size(3);
  x = mean(reshape(x, {B * S, c2, hw}), 2, false);
  return reshape(x, {B, S, c2});
}

Tensor segment_pool(const Tensor& phi) {
  if (phi.dim() != 3 || phi.size(1) == 0) {
    throw DimensionError("segment_pool: expected [B, S, F'] with S >= 1, got " + shape_str(phi.shape()));
  }
  return mean(phi, 1, false);
}

Tensor encode_video(const Tensor& clips, const VideoBackbone& backbone, Mode) {
  return segment_pool(backbone.segment_features(clips));
}

Tensor project_video(const Tensor& f_v, const Tensor& W_v, const Tensor& b_v) {
  if (f_v.dim() != 2 || W_v.dim() != 2 || f_v.size(1) != W_v.size(0) || b_v.numel() != W_v.size(1)) {
    throw DimensionError("project_video: f_v " + shape_str(f_v.shape()) + ", W_v " + shape_str(W_v.shape()) +
                         ", b_v " + shape_str(b_v.shape()) + " are incompatible");
  }
  return add(matmul(f_v, W_v), b_v);
}

LevelClassifier::LevelClassifier(std::size_t d, ParameterSet& params, const std::string& prefix,
                                 std::uint64_t seed) {
  w1_ = params.add(prefix + ".w1", glorot({d, d}, d, d, seed, prefix + ".w1"));
  b1_ = params.add(prefix + ".b1", Tensor::zeros({d}));
  w2_ = params.add(prefix + ".w2", glorot({d, kNumLevels}, d, kNumLevels, seed, prefix + ".w2"));
  b2_ = params.add(prefix + ".b2", Tensor::zeros({kNumLevels}));
}

Tensor LevelClassifier::forward(const Tensor& z) const {
  return add(matmul(relu(add(matmul(z, w1_), b1_)), w2_), b2_);
}

SensorProbe::SensorProbe(std::size_t d, ParameterSet& params, const std::string& prefix, std::uint64_t seed) {
  w_ = params.add(prefix + ".weight", glorot({d, kNumLevels}, d, kNumLevels, seed, prefix + ".weight"));
  b_ = params.add(prefix + ".bias", Tensor::zeros({kNumLevels}));
}

Tensor SensorProbe::forward(const Tensor& z) const { return add(matmul(z, w_), b_); }

VideoBranch::VideoBranch(const VideoConfig& cfg, std::size_t d, ParameterSet& params, std::uint64_t seed)
    : cfg_(cfg),
      backbone_(cfg, params, "video.backbone", seed),
      wv_(params.add("video.proj.weight",
                     glorot({cfg.pooled_dim(), d}, cfg.pooled_dim(), d, seed, "video.proj.weight"))),
      bv_(params.add("video.proj.bias", Tensor::zeros({d}))),
      classifier_(d, params, "classifier", seed) {}

VideoBranch::Output VideoBranch::forward(const Tensor& clips, Mode mode) const {
  Output o;
  o.f_v = encode_video(clips, backbone_, mode);
  o.z_v = project_video(o.f_v, wv_, bv_);
  o.logits = classifier_.forward(o.z_v);
  return o;
}

int argmax_level(const real* logits, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

PTGNN_NAMESPACE_END
