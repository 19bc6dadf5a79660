#include "ptgnn/model.hpp"

PTGNN_NAMESPACE_BEGIN

void ModelConfig::validate(std::size_t window) const {
  for (std::size_t m = 0; m < 3; ++m) {
    if (encoders[m].modality != kSensorModalities[m]) {
      throw ConfigError("encoder slot " + std::to_string(m) + " must be " +
                        std::string(modality_name(kSensorModalities[m])));
    }
    if (nodes[m] == 0) throw ConfigError("node count of " + std::string(modality_name(kSensorModalities[m])) + " must be positive");
    encoders[m].validate(window);
  }
  dae.validate();
  video.validate();
}

bool is_sensor_parameter(const std::string& name) {
  for (const char* p : {"encoder.", "graph.", "diffattn.", "probe.", "norm.eye.", "norm.head.", "norm.phy."}) {
    if (name.rfind(p, 0) == 0) return true;
  }
  return false;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.dae.validate();
  cfg_.video.validate();
  std::vector<std::size_t> depths;
  for (std::size_t m = 0; m < 3; ++m) {
    const std::string name(modality_name(kSensorModalities[m]));
    encoders_.emplace_back(cfg_.encoders[m], params_, "encoder." + name, cfg_.seed);
    const std::size_t D = cfg_.encoders[m].out_depth();
    const std::size_t H = cfg_.graph.hidden ? cfg_.graph.hidden : D;
    const std::size_t O = cfg_.graph.out ? cfg_.graph.out : D;
    graphs_.emplace_back(kSensorModalities[m], cfg_.nodes[m], D, H, O, cfg_.graph.normalized, params_,
                         "graph." + name, cfg_.seed);
    depths.push_back(O);
  }
  dae_ = std::make_unique<DifferenceAttentionEncoder>(
      cfg_.dae, std::vector<std::size_t>(cfg_.nodes.begin(), cfg_.nodes.end()), depths, params_, "diffattn",
      cfg_.seed);
  // z_p is layer-normalized so the alignment target keeps a fixed scale
  zp_gamma_ = params_.add("diffattn.ln_out.gamma", Tensor::ones({cfg_.dae.d}));
  zp_beta_ = params_.add("diffattn.ln_out.beta", Tensor::zeros({cfg_.dae.d}));
  probe_ = std::make_unique<SensorProbe>(cfg_.dae.d, params_, "probe", cfg_.seed);
  video_ = std::make_unique<VideoBranch>(cfg_.video, cfg_.dae.d, params_, cfg_.seed);
  // input statistics; identity until a trainer fits them
  for (std::size_t m = 0; m < 3; ++m) {
    const std::string name = "norm." + std::string(modality_name(kSensorModalities[m]));
    const std::size_t width = cfg_.nodes[m] * cfg_.encoders[m].in_depth;
    params_.add_buffer(name + ".mean", Tensor::zeros({width}));
    params_.add_buffer(name + ".inv_std", Tensor::ones({width}));
  }
  params_.add_buffer("norm.video.mean", Tensor::zeros({cfg_.video.feature_dim}));
  params_.add_buffer("norm.video.inv_std", Tensor::ones({cfg_.video.feature_dim}));
}

SensorOutput Model::sensor_forward(const SensorInputs& x, Mode mode, std::uint64_t dropout_seed) {
  std::vector<Tensor> zs;
  for (std::size_t m = 0; m < 3; ++m) {
    const ModalityEmbedding e = encoders_[m].forward(x[m], mode, mix_seed(dropout_seed, m));
    zs.push_back(graphs_[m].forward(e));
  }
  SensorOutput out;
  out.dae = dae_->forward(zs, mode);
  out.z_p = layernorm(out.dae.z_p, zp_gamma_, zp_beta_);
  out.probe_logits = probe_->forward(out.z_p);
  return out;
}

VideoBranch::Output Model::video_forward(const Tensor& clips, Mode mode) const {
  return video_->forward(clips, mode);
}

PTGNN_NAMESPACE_END
