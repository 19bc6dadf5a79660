#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "ptgnn/numerics/ops.hpp"
#include "ptgnn/params.hpp"

PTGNN_NAMESPACE_BEGIN

enum class Modality { eye, head, phy };

inline constexpr std::array<Modality, 3> kSensorModalities{Modality::eye, Modality::head, Modality::phy};

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

/// Node (channel) count of each sensor modality in the recording schema.
constexpr std::size_t schema_node_count(Modality m) {
  switch (m) {
    case Modality::eye: return 38;
    case Modality::head: return 12;
    case Modality::phy: return 3;
  }
  return 0;
}

struct EncoderStage {
  std::size_t channels = 16;
  std::size_t kernel = 3;
  std::size_t pool = 2;
};

/// Three-stage temporal CNN applied to every node independently.
struct EncoderConfig {
  Modality modality = Modality::eye;
  std::size_t in_depth = 1;  // features per node and time step
  std::vector<EncoderStage> stages;
  real dropout = real(0.1);

  static EncoderConfig defaults(Modality m);

  std::size_t out_depth() const { return stages.empty() ? 0 : stages.back().channels; }
  /// Number of input samples that influence one output sample.
  std::size_t receptive_field() const;
  /// Reduced time extent T' produced from a window of `window` samples.
  std::size_t output_length(std::size_t window) const;
  /// Throws ConfigError when the config is malformed or `window` is shorter
  /// than the receptive field.
  void validate(std::size_t window) const;
};

/// Learnable scalars of one conv -> batchnorm stage (kernel, bias, gamma, beta).
constexpr std::size_t stage_param_count(std::size_t c_in, std::size_t c_out, std::size_t kernel) {
  return c_out * c_in * kernel + c_out + 2 * c_out;
}

std::size_t param_count(const EncoderConfig& cfg);

struct ModalityEmbedding {
  Tensor tensor;  // [B, T', N, D]
  Modality modality = Modality::eye;
};

/// Hierarchical 1D-CNN embedding extractor for one modality. Each stage is
/// conv (same padding) -> batchnorm -> relu -> max-pool, with dropout after
/// the first stage only. Convolutions run along time for each node; nodes
/// never mix here.
class ModalityEncoder {
 public:
  ModalityEncoder(EncoderConfig cfg, ParameterSet& params, const std::string& prefix, std::uint64_t seed);

  /// x: [B, T, N, in_depth] -> [B, T', N, out_depth].
  ModalityEmbedding forward(const Tensor& x, Mode mode, std::uint64_t dropout_seed);

  const EncoderConfig& config() const { return cfg_; }

  struct Stage {
    Tensor weight, bias, gamma, beta;
    BatchNormState bn;
  };
  std::vector<Stage>& stages() { return stages_; }

 private:
  EncoderConfig cfg_;
  std::vector<Stage> stages_;
};

/// Free-function form of ModalityEncoder::forward.
inline ModalityEmbedding encode_modality(const Tensor& x, ModalityEncoder& enc, Mode mode,
                                         std::uint64_t dropout_seed = 0) {
  return enc.forward(x, mode, dropout_seed);
}

PTGNN_NAMESPACE_END
