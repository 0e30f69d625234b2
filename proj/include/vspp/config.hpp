// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one nested YAML document. A `profile` key (desk or
// paper) selects the defaults; every other key overrides them.
//
//   profile: desk
//   seed: 0
//   data:     root, manifest, classes, videos_per_class, frames, frame_size,
//             speed_min, speed_max, noise, seed, train_fraction
//   model:    family, stage_widths, blocks_per_stage, projection_dim, predictor_hidden
//   sampler:  clip_len, segments, max_speed
//   augment:  enabled, crop_size, flip_prob, brightness, contrast, saturation, hue
//   optim:    batch_size, momentum, weight_decay, lr_factor, lr_step_epochs
//   aux:      epochs, lr, bank_size, momentum, teacher_temp, student_temp
//   vspp:     epochs, lr, alpha, beta, eval_plans, passes_per_epoch, augment
//   finetune: epochs, lr, clips_per_video
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vspp/augment.hpp"
#include "vspp/dataio.hpp"
#include "vspp/evalharness.hpp"
#include "vspp/models.hpp"
#include "vspp/nn/optim.hpp"
#include "vspp/pipeline.hpp"
#include "vspp/pretext.hpp"
#include "vspp/sampling.hpp"

namespace vspp::config {

enum class Profile { Desk, Paper };
std::string to_string(Profile p);
Profile parse_profile(const std::string& s);

struct DataConfig {
  std::string root;      // frame directories; empty selects the synthetic generator
  std::string manifest;  // relative to root when not absolute
  int classes = 4;
  int videos_per_class = 50;
  int frames = 64;
  int frame_size = 32;
  double speed_min = 1.0;
  double speed_max = 2.0;
  int noise = 6;
  std::uint64_t seed = 1234;
  double train_fraction = 1.0;  // share of labelled train videos used for finetuning
};

struct ModelConfig {
  models::Family family = models::Family::Plain3d;
  std::vector<int> stage_widths{16, 32, 64, 128};
  int blocks_per_stage = 1;
  int projection_dim = 128;
  int predictor_hidden = 1024;
};

struct SamplerConfig {
  int clip_len = 8;
  int segments = 4;
  int max_speed = 4;
};

struct OptimConfig {
  int batch_size = 8;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_factor = 0.1;
  int lr_step_epochs = 6;
};

struct AuxConfig {
  int epochs = 20;
  double lr = 1e-3;
  int bank_size = 1024;
  double momentum = 0.999;
  double teacher_temp = 0.02;
  double student_temp = 0.02;
};

struct VsppConfig {
  int epochs = 20;
  double lr = 1e-3;
  double alpha = 1.0;
  double beta = 1.0;
  int eval_plans = 4;
  int passes_per_epoch = 1;  // fresh plans per training video per epoch
  bool augment = true;       // photometric and crop augmentation of pretext clips
};

struct FinetuneSection {
  int epochs = 25;
  double lr = 3e-3;
  int clips_per_video = 10;
};

struct RunConfig {
  Profile profile = Profile::Desk;
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  SamplerConfig sampler;
  augment::AugmentPolicy augment;
  OptimConfig optim;
  AuxConfig aux;
  VsppConfig vspp;
  FinetuneSection finetune;

  /// InvalidParams naming the offending key.
  void validate() const;

  models::EncoderConfig encoder() const;
  models::HeadDims heads() const;
  data::SynthSpec synth_spec() const;
  sampling::SamplerParams sampler_params() const;
  pipeline::ViewSettings view_settings() const;
  nn::SgdOptions sgd() const;
  nn::StepSchedule schedule(double base_lr) const;
  eval::FinetuneConfig finetune_config() const;
  eval::EvalProtocol eval_protocol() const;
  pretext::VsppLossWeights loss_weights() const;
};

RunConfig defaults(Profile profile);

/// Canonical YAML: every key, fixed order, round-trip exact doubles.
std::string to_yaml(const RunConfig& config);

/// Profile defaults overlaid with the document's keys. Unknown keys and
/// ill-typed values raise InvalidParams. `profile_override` wins over the
/// document's own `profile`.
RunConfig from_yaml(const std::string& text, const std::string& profile_override = "");
RunConfig load(const std::filesystem::path& path, const std::string& profile_override = "");

/// FNV-1a of the canonical YAML.
std::uint64_t config_hash(const RunConfig& config);
std::string hash_hex(std::uint64_t hash);

}  // namespace vspp::config
