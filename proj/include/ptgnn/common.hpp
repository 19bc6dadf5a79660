#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// The library is compiled once per floating-point profile. Each profile lives
// in its own inline namespace so a float32 and a float64 build can be linked
// into the same binary.
#if defined(PTGNN_DOUBLE)
#define PTGNN_ABI f64
#else
#define PTGNN_ABI f32
#endif

#define PTGNN_NAMESPACE_BEGIN \
  namespace ptgnn {           \
  inline namespace PTGNN_ABI {
#define PTGNN_NAMESPACE_END \
  }                         \
  }

PTGNN_NAMESPACE_BEGIN

#if defined(PTGNN_DOUBLE)
using real = double;
#else
using real = float;
#endif

inline constexpr const char* precision_name() {
#if defined(PTGNN_DOUBLE)
  return "float64";
#else
  return "float32";
#endif
}

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Base of every error thrown by the library. `kind()` is a stable category
/// name used by the CLI to pick an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

#define PTGNN_DEFINE_ERROR(Name, Kind)                          \
  class Name : public Error {                                   \
   public:                                                      \
    using Error::Error;                                         \
    const char* kind() const noexcept override { return Kind; } \
  };

PTGNN_DEFINE_ERROR(DimensionError, "dimension")
PTGNN_DEFINE_ERROR(ContractError, "contract")
PTGNN_DEFINE_ERROR(ConfigError, "config")
PTGNN_DEFINE_ERROR(NumericError, "numeric")
PTGNN_DEFINE_ERROR(LabelRangeError, "label-range")
PTGNN_DEFINE_ERROR(DataError, "data")
PTGNN_DEFINE_ERROR(SchemaError, "schema")
PTGNN_DEFINE_ERROR(CheckpointError, "checkpoint")
PTGNN_DEFINE_ERROR(IoError, "io")

#undef PTGNN_DEFINE_ERROR

enum class Mode { train, eval };

/// splitmix64 finalizer; used to derive independent seeds from (seed, tag).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

PTGNN_NAMESPACE_END
