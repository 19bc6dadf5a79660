#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptgnn/checkpoint.hpp"

namespace ptgnn::cli {

/// Exit codes shared by every command.
enum Exit : int { ok = 0, usage = 1, config = 2, numeric = 3, io = 4 };

/// Runs the command line `args` (without the program name) and returns the
/// process exit code. Errors are reported on stderr.
int run(const std::vector<std::string>& args);

/// Batch-1 latency of the video path (normalization and forward) over
/// `samples` random clips after `warmup` untimed runs. Times in milliseconds,
/// plus model size and a machine descriptor.
nlohmann::json bench_checkpoint(const Checkpoint& ck, std::size_t samples, std::size_t warmup, std::uint64_t seed);

}  // namespace ptgnn::cli
