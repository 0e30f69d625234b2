// SPDX-License-Identifier: Apache-2.0
//
// Stage orchestration behind the command-line tool. Every command writes into
// a run directory `<out_dir>/<stage>-s<seed>-<hash8>` whose hash covers the
// config and any input checkpoint, so independent runs never collide.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vspp/config.hpp"
#include "vspp/dataio.hpp"
#include "vspp/metrics.hpp"

namespace vspp::commands {

/// Environment variable that overrides `data.root`.
inline constexpr const char* kDataRootEnv = "VSPP_DATA_ROOT";

struct RunOptions {
  std::filesystem::path out_dir = "runs";
  /// Stage-1 weights for pretrain-vspp, encoder source for finetune, the
  /// finetuned model for evaluate.
  std::string checkpoint;
  /// Continue from the newest epoch checkpoint in the run directory.
  bool resume = false;
  /// Stop after this epoch (simulates an interruption).
  std::optional<int> stop_after_epoch;
  std::ostream* log = nullptr;
};

struct RunResult {
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint;  // last one written
  std::filesystem::path metrics;
  std::vector<std::filesystem::path> checkpoints;
  metrics::MetricsTable table;
  double top1 = 0;  // finetune (validation) and evaluate (test)
};

/// Profile defaults, then the file (if any), then the seed override.
config::RunConfig resolve_config(const std::string& config_path, const std::string& profile,
                                 std::optional<std::uint64_t> seed);

/// Synthetic data unless a root is configured (or set in the environment);
/// a root is read through its manifest.
data::Dataset load_dataset(const config::RunConfig& cfg);

/// Videos of one split, keeping the first `fraction` (rounded up) of each
/// class in video order.
std::vector<const data::VideoSource*> split_videos(const data::Dataset& dataset, data::Split split,
                                                   double fraction = 1.0);

std::string run_id(const std::string& stage, const config::RunConfig& cfg, const std::string& input_checkpoint);

RunResult pretrain_aux(const config::RunConfig& cfg, const RunOptions& opts);
RunResult pretrain_vspp(const config::RunConfig& cfg, const RunOptions& opts);
RunResult finetune(const config::RunConfig& cfg, const RunOptions& opts);
/// Writes `results.csv`: run_id, split, checkpoint, top1, config_hash.
RunResult evaluate(const config::RunConfig& cfg, const RunOptions& opts);

struct InspectRequest {
  std::int64_t frames = 20;
  std::int64_t clip_len = 16;
  std::int64_t segments = 4;
  std::int64_t max_speed = 4;
  int speed = 1;
  int segment = 1;
  std::int64_t offset = 0;
};

/// The sampler's record for one plan, or InvalidParams/OutOfRange naming the
/// violated precondition.
std::string inspect_sample(const InspectRequest& request);

/// One SVG per shared metric; labels default to the file stems.
std::vector<std::filesystem::path> plot(const std::vector<std::filesystem::path>& files,
                                        const std::vector<std::string>& labels, const std::filesystem::path& out_dir);

}  // namespace vspp::commands
