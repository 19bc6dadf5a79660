#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ptgnn/diffattn.hpp"
#include "ptgnn/encoders.hpp"
#include "ptgnn/graph.hpp"
#include "ptgnn/video.hpp"

PTGNN_NAMESPACE_BEGIN

struct GraphConfig {
  std::size_t hidden = 0;  // 0: same as the encoder depth
  std::size_t out = 0;     // 0: same as the encoder depth
  bool normalized = false;
};

struct ModelConfig {
  std::array<EncoderConfig, 3> encoders{EncoderConfig::defaults(Modality::eye),
                                        EncoderConfig::defaults(Modality::head),
                                        EncoderConfig::defaults(Modality::phy)};
  std::array<std::size_t, 3> nodes{schema_node_count(Modality::eye), schema_node_count(Modality::head),
                                   schema_node_count(Modality::phy)};
  GraphConfig graph;
  DaeConfig dae;
  VideoConfig video;
  std::uint64_t seed = 1;

  void validate(std::size_t window) const;
};

/// Sensor windows, one tensor per modality in [eye, head, phy] order,
/// each [B, T, N_m, depth_m].
using SensorInputs = std::array<Tensor, 3>;

struct SensorOutput {
  Tensor z_p;           // [B, d], layer-normalized DAE output
  Tensor probe_logits;  // [B, 11]
  DaeOutput dae;
};

/// Full two-branch model. The sensor branch (encoder -> graph -> diffattn ->
/// probe) is only needed for training; inference runs the video branch.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  SensorOutput sensor_forward(const SensorInputs& x, Mode mode, std::uint64_t dropout_seed = 0);
  VideoBranch::Output video_forward(const Tensor& clips, Mode mode) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const GraphModule& graph(std::size_t m) const { return graphs_[m]; }
  const DifferenceAttentionEncoder& dae() const { return *dae_; }

 private:
  ModelConfig cfg_;
  ParameterSet params_;
  std::vector<ModalityEncoder> encoders_;
  std::vector<GraphModule> graphs_;
  std::unique_ptr<DifferenceAttentionEncoder> dae_;
  std::unique_ptr<SensorProbe> probe_;
  Tensor zp_gamma_, zp_beta_;
  std::unique_ptr<VideoBranch> video_;
};

/// Parameter name prefixes that belong to the sensor branch.
bool is_sensor_parameter(const std::string& name);

PTGNN_NAMESPACE_END
