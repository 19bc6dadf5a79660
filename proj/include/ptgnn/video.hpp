#pragma once

#include <string>
#include <string_view>

#include "ptgnn/numerics/ops.hpp"
#include "ptgnn/params.hpp"

PTGNN_NAMESPACE_BEGIN

inline constexpr std::size_t kNumLevels = 11;

enum class Backbone { linear, tinyconv };

std::string_view backbone_name(Backbone b);
Backbone parse_backbone(std::string_view name);

struct VideoConfig {
  Backbone backbone = Backbone::linear;
  std::size_t segments = 8;
  std::size_t feature_dim = 128;  // F: values per segment (H*W*C for tinyconv)
  std::size_t hidden = 128;       // linear backbone hidden width
  std::size_t out_dim = 128;      // F' for the linear backbone
  std::size_t frame_h = 32, frame_w = 32, frame_c = 3;
  std::size_t conv1_channels = 8, conv2_channels = 16;

  /// Pooled feature width F'.
  std::size_t pooled_dim() const { return backbone == Backbone::linear ? out_dim : conv2_channels; }
  void validate() const;
};

/// Per-segment backbone phi. Parameters live under `<prefix>.`.
class VideoBackbone {
 public:
  VideoBackbone(const VideoConfig& cfg, ParameterSet& params, const std::string& prefix, std::uint64_t seed);

  /// clips [B, S, F] -> phi(I_t) for every segment, [B, S, F'].
  Tensor segment_features(const Tensor& clips) const;

 private:
  VideoConfig cfg_;
  Tensor w1_, b1_, w2_, b2_;
};

/// Uniform mean over the segment axis: [B, S, F'] -> [B, F'].
Tensor segment_pool(const Tensor& phi);

/// f_v = (1/S) sum_t phi(I_t).
Tensor encode_video(const Tensor& clips, const VideoBackbone& backbone, Mode mode);

/// z_v = f_v W_v + b_v.
Tensor project_video(const Tensor& f_v, const Tensor& W_v, const Tensor& b_v);

/// Two-layer head d -> d -> 11 with relu.
class LevelClassifier {
 public:
  LevelClassifier(std::size_t d, ParameterSet& params, const std::string& prefix, std::uint64_t seed);
  Tensor forward(const Tensor& z) const;

 private:
  Tensor w1_, b1_, w2_, b2_;
};

/// Linear probe d -> 11 on the sensor embedding.
class SensorProbe {
 public:
  SensorProbe(std::size_t d, ParameterSet& params, const std::string& prefix, std::uint64_t seed);
  Tensor forward(const Tensor& z) const;

 private:
  Tensor w_, b_;
};

/// Video path of the model: backbone, pooling, projection and classifier.
/// Parameter names start with `video.` and `classifier.`.
class VideoBranch {
 public:
  VideoBranch(const VideoConfig& cfg, std::size_t d, ParameterSet& params, std::uint64_t seed);

  struct Output {
    Tensor f_v;     // [B, F']
    Tensor z_v;     // [B, d]
    Tensor logits;  // [B, 11]
  };
  Output forward(const Tensor& clips, Mode mode) const;
  const VideoConfig& config() const { return cfg_; }

 private:
  VideoConfig cfg_;
  VideoBackbone backbone_;
  Tensor wv_, bv_;
  LevelClassifier classifier_;
};

/// Index of the largest logit; ties go to the lower index.
int argmax_level(const real* logits, std::size_t n = kNumLevels);

PTGNN_NAMESPACE_END
