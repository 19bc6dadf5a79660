#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ptgnn/config.hpp"
#include "ptgnn/model.hpp"
#include "ptgnn/video.hpp"

PTGNN_NAMESPACE_BEGIN

/// Bumped whenever the file layout changes; readers reject other versions.
inline constexpr int kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  bool learnable = true;
  std::vector<real> values;
};

/// File: "PTGNNCK1", u32 LE manifest length, JSON manifest, then raw
/// little-endian payload (float32, or float64 in the double build). The manifest lists every tensor's name,
/// shape, dtype, byte offset and byte length.
struct Checkpoint {
  std::string config;  // canonical RunConfig text
  bool stripped = false;
  std::vector<CheckpointTensor> tensors;

  static Checkpoint from_model(const Model& model, const RunConfig& cfg);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  RunConfig run_config() const;
  std::string config_hash() const;
  const CheckpointTensor* find(const std::string& name) const;

  /// Copies every stored tensor into matching entries of `params`; names and
  /// shapes must agree and, unless `partial`, every entry must be covered.
  void apply_to(ParameterSet& params, bool partial = false) const;
  /// Rebuilds the full model. Throws CheckpointError for stripped files.
  Model to_model() const;

  /// Keeps only tensors the video path needs.
  Checkpoint strip() const;
  std::size_t scalar_count() const;
  std::size_t payload_bytes() const { return scalar_count() * sizeof(real); }
};

/// Tensors needed for video-only inference.
bool is_video_path_tensor(const std::string& name);

/// Video-only inference from a checkpoint, full or stripped. Raw clips are
/// normalized with the stored video statistics before the video branch.
class InferenceEngine {
 public:
  explicit InferenceEngine(const Checkpoint& ck);

  /// clips [B, S, F] of raw frame features -> logits [B, 11].
  Tensor logits(const Tensor& raw_clips) const;
  /// One clip of S*F raw values -> level.
  int infer_level(std::span<const real> clip) const;

  /// Checkpoint tensors read while building the engine.
  const std::vector<std::string>& accessed() const { return accessed_; }
  const VideoConfig& video_config() const { return video_cfg_; }

 private:
  VideoConfig video_cfg_;
  ParameterSet params_;
  std::unique_ptr<VideoBranch> branch_;
  std::vector<real> mean_, inv_std_;
  std::vector<std::string> accessed_;
};

PTGNN_NAMESPACE_END
