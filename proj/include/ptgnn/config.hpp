#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ptgnn/data.hpp"
#include "ptgnn/train.hpp"

PTGNN_NAMESPACE_BEGIN

/// Every tunable of a run. Text form is flat `key = value` lines with dotted
/// namespaces; `#` starts a comment.
struct RunConfig {
  std::string data = "synthetic:";  // directory, or synthetic:<spec>
  std::size_t window = 300;
  std::size_t stride = 30;
  CvSettings cv;

  /// Parses text on top of the defaults. Unknown keys, malformed values and
  /// repeated keys are all collected into one ConfigError.
  static RunConfig parse(const std::string& text, const std::string& origin = "config");
  static RunConfig load(const std::filesystem::path& path);

  /// Sets one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::vector<std::string> keys() const;

  /// Sorted `key = value` lines covering every key; parse(canonical()) == *this.
  std::string canonical() const;
  std::string hash() const;  // FNV-1a of canonical(), 16 hex digits

  bool synthetic() const { return data.rfind("synthetic:", 0) == 0; }
  SyntheticSpec synthetic_spec() const;

  /// Checks everything that does not need the data.
  void validate() const;
};

/// Loads recordings from a directory or generates them from a synthetic spec.
std::vector<SubjectRecording> load_data(const std::string& source);

PTGNN_NAMESPACE_END
