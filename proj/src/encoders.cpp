#include "ptgnn/encoders.hpp"

PTGNN_NAMESPACE_BEGIN

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::eye: return "eye";
    case Modality::head: return "head";
    case Modality::phy: return "phy";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  for (auto m : kSensorModalities) {
    if (modality_name(m) == name) return m;
  }
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

EncoderConfig EncoderConfig::defaults(Modality m) {
  EncoderConfig c;
  c.modality = m;
  // Motion streams carry (mean, std) per node after 1 Hz downsampling.
  c.in_depth = m == Modality::phy ? 1 : 2;
  const std::size_t pool = m == Modality::phy ? 1 : 2;
  c.stages = {{16, 5, pool}, {32, 3, pool}, {32, 3, pool}};
  return c;
}

std::size_t EncoderConfig::receptive_field() const {
  std::size_t rf = 1, jump = 1;
  for (const auto& s : stages) {
    rf += (s.kernel - 1) * jump;
    rf += (s.pool - 1) * jump;
    jump *= s.pool;
  }
  return rf;
}

std::size_t EncoderConfig::output_length(std::size_t window) const {
  std::size_t len = window;
  for (const auto& s : stages) {
    const std::size_t pad = s.kernel / 2;
    if (s.kernel > len + 2 * pad) return 0;
    len = len + 2 * pad - s.kernel + 1;
    if (len < s.pool) return 0;
    len = (len - s.pool) / s.pool + 1;
  }
  return len;
}

void EncoderConfig::validate(std::size_t window) const {
  const std::string who = "encoder." + std::string(modality_name(modality));
  if (stages.size() != 3) {
    throw ConfigError(who + ": exactly three stages required, got " + std::to_string(stages.size()));
  }
  if (in_depth == 0) throw ConfigError(who + ": in_depth must be positive");
  for (const auto& s : stages) {
    if (s.channels == 0 || s.kernel == 0 || s.pool == 0) {
      throw ConfigError(who + ": channels, kernels and pools must be positive");
    }
  }
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError(who + ".dropout must lie in [0, 1)");
  const std::size_t rf = receptive_field();
  if (window < rf || output_length(window) == 0) {
    throw ConfigError(who + ": window of " + std::to_string(window) +
                      " samples is shorter than the receptive field; requires at least " +
                      std::to_string(rf));
  }
}

std::size_t param_count(const EncoderConfig& cfg) {
  if (cfg.stages.size() != 3) {
    throw ConfigError("param_count: exactly three stages required, got " + std::to_string(cfg.stages.size()));
  }
  std::size_t n = 0, c_in = cfg.in_depth;
  for (const auto& s : cfg.stages) {
    n += stage_param_count(c_in, s.channels, s.kernel);
    c_in = s.channels;
  }
  return n;
}

ModalityEncoder::ModalityEncoder(EncoderConfig cfg, ParameterSet& params, const std::string& prefix,
                                 std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  if (cfg_.stages.size() != 3) {
    throw ConfigError(prefix + ": exactly three stages required, got " + std::to_string(cfg_.stages.size()));
  }
  std::size_t c_in = cfg_.in_depth;
  for (std::size_t i = 0; i < cfg_.stages.size(); ++i) {
    const auto& s = cfg_.stages[i];
    const std::string p = prefix + ".stage" + std::to_string(i + 1);
    Stage st;
    st.weight = params.add(p + ".conv.weight",
                           glorot({s.channels, c_in, s.kernel}, c_in * s.kernel, s.channels * s.kernel, seed,
                                  p + ".conv.weight"));
    st.bias = params.add(p + ".conv.bias", Tensor::zeros({s.channels}));
    st.gamma = params.add(p + ".bn.gamma", Tensor::ones({s.channels}));
    st.beta = params.add(p + ".bn.beta", Tensor::zeros({s.channels}));
    st.bn = BatchNormState::create(s.channels);
    params.add_buffer(p + ".bn.running_mean", st.bn.running_mean);
    params.add_buffer(p + ".bn.running_var", st.bn.running_var);
    stages_.push_back(std::move(st));
    c_in = s.channels;
  }
}

ModalityEmbedding ModalityEncoder::forward(const Tensor& x, Mode mode, std::uint64_t dropout_seed) {
  const Shape& xs = x.shape();
  if (xs.size() != 4 || xs[3] != cfg_.in_depth) {
    throw DimensionError("encoder." + std::string(modality_name(cfg_.modality)) + ": expected [B, T, N, " +
                         std::to_string(cfg_.in_depth) + "] input, got " + shape_str(xs));
  }
  const std::size_t B = xs[0], T = xs[1], N = xs[2];
  cfg_.validate(T);
  Tensor h = reshape(permute(x, {0, 2, 3, 1}), {B * N, cfg_.in_depth, T});
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    auto& st = stages_[i];
    const auto& sc = cfg_.stages[i];
    h = conv1d(h, st.weight, st.bias, 1, sc.kernel / 2);
    h = batchnorm(h, st.gamma, st.beta, st.bn, mode);
    h = relu(h);
    if (sc.pool > 1) h = maxpool1d(h, sc.pool, sc.pool);
    if (i == 0) h = dropout(h, cfg_.dropout, mode, dropout_seed);
  }
  const std::size_t D = h.shape()[1], Tp = h.shape()[2];
  h = permute(reshape(h, {B, N, D, Tp}), {0, 3, 1, 2});
  return {h, cfg_.modality};
}

PTGNN_NAMESPACE_END
