#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "ptgnn/model.hpp"

PTGNN_NAMESPACE_BEGIN

inline constexpr double kMotionRate = 30.0;
inline constexpr double kPhyRate = 1.0;
inline constexpr double kFrameRate = 30.0;
inline constexpr std::size_t kMotionInterval = 30;  // samples per 1 Hz step

/// Channel names of the recording schema.
const std::vector<std::string>& eye_channel_names();   // 38
const std::vector<std::string>& head_channel_names();  // 12
const std::vector<std::string>& phy_channel_names();   // eda, bvp, skt

/// Uniformly sampled multichannel signal, row-major [samples, channels].
struct Stream {
  double rate = 0;
  std::vector<std::string> channels;
  std::vector<real> values;

  std::size_t width() const { return channels.size(); }
  std::size_t samples() const { return channels.empty() ? 0 : values.size() / channels.size(); }
  real at(std::size_t sample, std::size_t channel) const { return values[sample * channels.size() + channel]; }
};

/// Per-frame feature vectors at 30 FPS, row-major [frames, dim].
struct FrameStream {
  std::size_t dim = 0;
  std::vector<real> values;

  std::size_t frames() const { return dim == 0 ? 0 : values.size() / dim; }
};

struct SubjectRecording {
  std::string subject_id;
  Stream eye, head, phy;
  FrameStream frames;
  std::vector<int> labels;  // one per second
};

/// Throws SchemaError naming the offending field when channel counts, rates,
/// lengths or label values break the schema.
void validate_schema(const SubjectRecording& rec);

/// Per interval and channel emits (mean, std) with the population std; the
/// output has 2 * C channels ordered [c0_mean, c0_std, c1_mean, ...]. A
/// trailing partial interval is dropped.
Stream downsample_motion(const Stream& s, std::size_t interval = kMotionInterval);

/// A recording brought to a common 1 Hz clock: motion as (mean, std) per
/// node, physiology as one value per node.
struct PreparedSubject {
  std::string subject_id;
  std::size_t seconds = 0;
  std::array<std::vector<real>, 3> sensors;  // [seconds, N_m, depth_m] per modality
  FrameStream frames;
  std::vector<int> labels;
};

inline constexpr std::array<std::size_t, 3> kSensorDepth{2, 2, 1};

PreparedSubject prepare(const SubjectRecording& rec);

struct WindowRef {
  std::size_t subject = 0;  // index into the dataset's subjects
  std::size_t start = 0;    // first second
  int label = 0;            // label at the window end
};

/// count = floor((L - T) / stride) + 1 windows over L seconds, each labeled
/// by its last second.
std::vector<WindowRef> make_windows(const PreparedSubject& s, std::size_t subject_index, std::size_t T,
                                    std::size_t stride);

struct Dataset {
  std::vector<PreparedSubject> subjects;
  std::vector<WindowRef> windows;
  std::size_t window = 0;

  std::size_t size() const { return windows.size(); }
  std::vector<int> labels() const;
};

Dataset build_dataset(const std::vector<SubjectRecording>& recs, std::size_t T, std::size_t stride);

/// Label-shuffled control: permutes window labels across the whole dataset.
Dataset shuffle_labels(Dataset ds, std::uint64_t seed);

/// Channel-wise z-score statistics estimated on training windows only.
struct Normalizer {
  std::array<std::vector<real>, 3> mean, inv_std;  // per modality, [N_m * depth_m]
  std::vector<real> video_mean, video_inv_std;     // [F]

  static Normalizer fit(const Dataset& ds, const std::vector<std::size_t>& train_windows);
  static Normalizer identity(const ModelConfig& cfg);
  /// Stored as buffers `norm.eye.mean`, `norm.eye.inv_std`, ..., `norm.video.*`.
  void export_to(ParameterSet& params) const;
  static Normalizer import_from(const ParameterSet& params);
};

struct Batch {
  SensorInputs sensors;
  Tensor clips;  // [B, S, F]
  std::vector<int> labels;
};

/// Gathers windows into tensors. Each window contributes `segments` frames,
/// one at the center of each equal time segment.
Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices, const Normalizer& norm,
                 std::size_t segments);

/// Video part of a window only, [S, F] flattened.
std::vector<real> window_clip(const Dataset& ds, std::size_t index, std::size_t segments);

/// Frame indices sampled for a window of T seconds starting at `start`.
std::vector<std::size_t> segment_frames(std::size_t start, std::size_t T, std::size_t segments);

// ---------------------------------------------------------------------------
// synthetic data

struct SyntheticSpec {
  std::size_t subjects = 10;
  std::size_t seconds = 600;
  std::size_t segment_seconds = 30;  // labels hold for this many seconds
  real noise = real(0.1);
  std::size_t frame_dim = 128;
  real drift = real(0.05);
  real frame_noise = real(10);   // frame noise is noise * frame_noise
  real frame_signal = real(0.3); // gain of the severity cue in frames
  std::uint64_t seed = 7;

  void validate() const;
};

/// Parses `key=value,...` pairs (subjects, seconds, segment, noise, frame_dim,
/// drift, frame_noise, frame_signal, seed) on top of the defaults.
SyntheticSpec parse_synthetic_spec(const std::string& text);

/// Traits that differ between subjects.
struct SubjectTraits {
  real susceptibility = 1;
  std::array<real, 38> eye_baseline{};
  std::array<real, 12> head_baseline{};
  std::array<real, 3> phy_baseline{};
  std::array<real, 3> phy_drift{};  // per minute
  real jitter_phase = 0;
};

inline constexpr real kJitterAmplitude = real(0.05);
inline constexpr double kJitterHz = 5.0;
inline constexpr std::size_t kJitterChannel = 11;

/// Recording of one subject. The level in each second is
/// clamp(round(10 * susceptibility * intensity), 0, 10) for that second's
/// content intensity.
SubjectRecording synthesize_subject(const std::string& id, const SubjectTraits& traits,
                                    const std::vector<real>& intensity, const SyntheticSpec& spec,
                                    std::uint64_t seed);

SubjectTraits draw_traits(std::uint64_t seed);

/// Subjects with balanced labels: every block of 11 segments visits each
/// level once in random order.
std::vector<SubjectRecording> generate_synthetic(const SyntheticSpec& spec);

/// The planted rule: the jitter channel of the head stream is a 5 Hz sinusoid
/// of amplitude kJitterAmplitude * (1 + level), so level = sqrt(2) * std / A - 1
/// over any whole second.
int closed_form_level(const SubjectRecording& rec, std::size_t second);

// ---------------------------------------------------------------------------
// files

/// subject_<id>/{eye,head,phy,labels}.csv and frames.ptgv.
void save_recording(const SubjectRecording& rec, const std::filesystem::path& dir);
SubjectRecording load_recording(const std::filesystem::path& dir);

/// All subject_* directories below `root`, in name order.
std::vector<SubjectRecording> load_recordings(const std::filesystem::path& root);

/// PTGV1 clip: magic, u32 frame count, u32 feature dim, little-endian float32 values.
void write_ptgv(const std::filesystem::path& path, const FrameStream& frames);
FrameStream read_ptgv(const std::filesystem::path& path);
FrameStream read_ptgv(std::istream& in, const std::string& what);

PTGNN_NAMESPACE_END
