// SPDX-License-Identifier: Apache-2.0
#include "vspp/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <yaml-cpp/yaml.h>

#include "vspp/error.hpp"
#include "vspp/rng.hpp"

namespace vspp::config {

std::string to_string(Profile p) { return p == Profile::Desk ? "desk" : "paper"; }

Profile parse_profile(const std::string& s) {
  if (s == "desk") return Profile::Desk;
  if (s == "paper") return Profile::Paper;
  throw Error(Errc::InvalidParams, "profile must be 'desk' or 'paper', got '" + s + "'");
}

RunConfig defaults(Profile profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == Profile::Paper) {
    c.data.frames = 64;
    c.data.frame_size = 128;
    c.model.stage_widths = {64, 128, 256, 512};
    c.model.blocks_per_stage = 2;
    c.sampler.clip_len = 16;
    c.augment.crop_size = 112;
    c.optim.batch_size = 30;
    c.aux.bank_size = 16384;
    c.aux.lr = 1e-3;
    c.vspp.lr = 1e-3;
  } else {
    c.optim.batch_size = 8;
    c.vspp.lr = 0.05;
    c.finetune.lr = 0.05;
    c.aux.epochs = 10;
    c.aux.momentum = 0.99;
    c.optim.lr_step_epochs = 20;
    c.vspp.passes_per_epoch = 4;
    c.vspp.augment = false;
  }
  return c;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw Error(Errc::InvalidParams, "config " + key + ": " + why);
  };
  if (data.classes < 1) fail("data.classes", "must be >= 1");
  if (data.videos_per_class < 1) fail("data.videos_per_class", "must be >= 1");
  if (data.frames < sampler.clip_len) fail("data.frames", "shorter than sampler.clip_len");
  if (data.frame_size < augment.crop_size) fail("data.frame_size", "smaller than augment.crop_size");
  if (!(data.train_fraction > 0 && data.train_fraction <= 1)) fail("data.train_fraction", "must lie in (0, 1]");
  if (model.stage_widths.empty()) fail("model.stage_widths", "needs at least one stage");
  if (model.blocks_per_stage < 1) fail("model.blocks_per_stage", "must be >= 1");
  if (sampler.segments < 1 || sampler.clip_len % sampler.segments != 0)
    fail("sampler.segments", "must divide sampler.clip_len");
  if (sampler.max_speed < 1) fail("sampler.max_speed", "must be >= 1");
  if (optim.batch_size < 2) fail("optim.batch_size", "batch normalization needs >= 2");
  if (optim.lr_step_epochs < 1) fail("optim.lr_step_epochs", "must be >= 1");
  if (aux.bank_size < 1) fail("aux.bank_size", "must be >= 1");
  if (!(aux.momentum >= 0 && aux.momentum <= 1)) fail("aux.momentum", "must lie in [0, 1]");
  if (!(aux.teacher_temp > 0) || !(aux.student_temp > 0)) fail("aux temperatures", "must be > 0");
  if (!(vspp.alpha >= 0) || !(vspp.beta >= 0)) fail("vspp.alpha/beta", "must be >= 0");
  if (vspp.eval_plans < 1) fail("vspp.eval_plans", "must be >= 1");
  if (vspp.passes_per_epoch < 1) fail("vspp.passes_per_epoch", "must be >= 1");
  if (finetune.clips_per_video < 1) fail("finetune.clips_per_video", "must be >= 1");
  if (aux.epochs < 0 || vspp.epochs < 0 || finetune.epochs < 0) fail("epochs", "must be >= 0");
  encoder().validate();
}

models::EncoderConfig RunConfig::encoder() const {
  models::EncoderConfig e;
  e.family = model.family;
  e.stage_widths = model.stage_widths;
  e.blocks_per_stage = model.blocks_per_stage;
  e.clip_len = sampler.clip_len;
  e.height = augment.crop_size;
  e.width = augment.crop_size;
  return e;
}

models::HeadDims RunConfig::heads() const { return {model.projection_dim, model.predictor_hidden}; }

data::SynthSpec RunConfig::synth_spec() const {
  data::SynthSpec s;
  s.num_classes = data.classes;
  s.videos_per_class = data.videos_per_class;
  s.frames_per_video = data.frames;
  s.frame_size = data.frame_size;
  s.speed_min = data.speed_min;
  s.speed_max = data.speed_max;
  s.noise_amplitude = data.noise;
  s.seed = data.seed;
  return s;
}

sampling::SamplerParams RunConfig::sampler_params() const {
  sampling::SamplerParams p;
  p.clip_len = sampler.clip_len;
  p.segments = sampler.segments;
  p.max_speed = sampler.max_speed;
  p.seed = seed;
  return p;
}

pipeline::ViewSettings RunConfig::view_settings() const {
  pipeline::ViewSettings v;
  v.sampler = sampler_params();
  v.augment = augment;
  v.augment.seed = seed;
  v.seed = seed;
  return v;
}

nn::SgdOptions RunConfig::sgd() const { return {optim.momentum, optim.weight_decay}; }

nn::StepSchedule RunConfig::schedule(double base_lr) const {
  return {base_lr, optim.lr_factor, optim.lr_step_epochs};
}

eval::FinetuneConfig RunConfig::finetune_config() const {
  eval::FinetuneConfig f;
  f.epochs = finetune.epochs;
  f.batch_size = optim.batch_size;
  f.schedule = schedule(finetune.lr);
  f.sgd = sgd();
  f.views = view_settings();
  return f;
}

eval::EvalProtocol RunConfig::eval_protocol() const {
  return {finetune.clips_per_video, sampler.clip_len, augment.crop_size};
}

pretext::VsppLossWeights RunConfig::loss_weights() const { return {vspp.alpha, vspp.beta}; }

// ------------------------------------------------------------------ YAML I/O

namespace {

std::string num(double v) { return fmt::format("{}", v); }

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_yaml(const RunConfig& c) {
  std::ostringstream o;
  o << "profile: " << to_string(c.profile) << "\n";
  o << "seed: " << c.seed << "\n";
  o << "data:\n"
    << "  root: " << quoted(c.data.root) << "\n"
    << "  manifest: " << quoted(c.data.manifest) << "\n"
    << "  classes: " << c.data.classes << "\n"
    << "  videos_per_class: " << c.data.videos_per_class << "\n"
    << "  frames: " << c.data.frames << "\n"
    << "  frame_size: " << c.data.frame_size << "\n"
    << "  speed_min: " << num(c.data.speed_min) << "\n"
    << "  speed_max: " << num(c.data.speed_max) << "\n"
    << "  noise: " << c.data.noise << "\n"
    << "  seed: " << c.data.seed << "\n"
    << "  train_fraction: " << num(c.data.train_fraction) << "\n";
  o << "model:\n"
    << "  family: " << models::to_string(c.model.family) << "\n"
    << "  stage_widths: [" << fmt::format("{}", fmt::join(c.model.stage_widths, ", ")) << "]\n"
    << "  blocks_per_stage: " << c.model.blocks_per_stage << "\n"
    << "  projection_dim: " << c.model.projection_dim << "\n"
    << "  predictor_hidden: " << c.model.predictor_hidden << "\n";
  o << "sampler:\n"
    << "  clip_len: " << c.sampler.clip_len << "\n"
    << "  segments: " << c.sampler.segments << "\n"
    << "  max_speed: " << c.sampler.max_speed << "\n";
  o << "augment:\n"
    << "  enabled: " << (c.augment.enabled ? "true" : "false") << "\n"
    << "  crop_size: " << c.augment.crop_size << "\n"
    << "  flip_prob: " << num(c.augment.flip_prob) << "\n"
    << "  brightness: " << num(c.augment.brightness) << "\n"
    << "  contrast: " << num(c.augment.contrast) << "\n"
    << "  saturation: " << num(c.augment.saturation) << "\n"
    << "  hue: " << num(c.augment.hue) << "\n";
  o << "optim:\n"
    << "  batch_size: " << c.optim.batch_size << "\n"
    << "  momentum: " << num(c.optim.momentum) << "\n"
    << "  weight_decay: " << num(c.optim.weight_decay) << "\n"
    << "  lr_factor: " << num(c.optim.lr_factor) << "\n"
    << "  lr_step_epochs: " << c.optim.lr_step_epochs << "\n";
  o << "aux:\n"
    << "  epochs: " << c.aux.epochs << "\n"
    << "  lr: " << num(c.aux.lr) << "\n"
    << "  bank_size: " << c.aux.bank_size << "\n"
    << "  momentum: " << num(c.aux.momentum) << "\n"
    << "  teacher_temp: " << num(c.aux.teacher_temp) << "\n"
    << "  student_temp: " << num(c.aux.student_temp) << "\n";
  o << "vspp:\n"
    << "  epochs: " << c.vspp.epochs << "\n"
    << "  lr: " << num(c.vspp.lr) << "\n"
    << "  alpha: " << num(c.vspp.alpha) << "\n"
    << "  beta: " << num(c.vspp.beta) << "\n"
    << "  eval_plans: " << c.vspp.eval_plans << "\n"
    << "  passes_per_epoch: " << c.vspp.passes_per_epoch << "\n"
    << "  augment: " << (c.vspp.augment ? "true" : "false") << "\n";
  o << "finetune:\n"
    << "  epochs: " << c.finetune.epochs << "\n"
    << "  lr: " << num(c.finetune.lr) << "\n"
    << "  clips_per_video: " << c.finetune.clips_per_video << "\n";
  return o.str();
}

namespace {

using Setter = std::function<void(const YAML::Node&)>;
using Section = std::map<std::string, Setter>;

template <class T>
Setter setter(T& field, std::string key) {
  return [&field, key](const YAML::Node& n) {
    try {
      field = n.as<T>();
    } catch (const YAML::Exception&) {
      throw Error(Errc::InvalidParams, "config " + key + ": cannot parse '" + YAML::Dump(n) + "'");
    }
  };
}

void apply_section(const YAML::Node& node, const std::string& name, const Section& section) {
  if (!node.IsMap()) throw Error(Errc::InvalidParams, "config " + name + ": expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    auto it = section.find(key);
    if (it == section.end()) throw Error(Errc::InvalidParams, "config: unknown key '" + name + "." + key + "'");
    it->second(kv.second);
  }
}

}  // namespace

RunConfig from_yaml(const std::string& text, const std::string& profile_override) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(Errc::InvalidParams, std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsNull() && !root.IsMap()) throw Error(Errc::InvalidParams, "config must be a mapping");

  std::string profile = "desk";
  if (root["profile"]) profile = root["profile"].as<std::string>();
  if (!profile_override.empty()) profile = profile_override;
  RunConfig c = defaults(parse_profile(profile));

  std::string family = models::to_string(c.model.family);
  const std::map<std::string, Section> sections{
      {"data",
       Section{{"root", setter(c.data.root, "data.root")},
        {"manifest", setter(c.data.manifest, "data.manifest")},
        {"classes", setter(c.data.classes, "data.classes")},
        {"videos_per_class", setter(c.data.videos_per_class, "data.videos_per_class")},
        {"frames", setter(c.data.frames, "data.frames")},
        {"frame_size", setter(c.data.frame_size, "data.frame_size")},
        {"speed_min", setter(c.data.speed_min, "data.speed_min")},
        {"speed_max", setter(c.data.speed_max, "data.speed_max")},
        {"noise", setter(c.data.noise, "data.noise")},
        {"seed", setter(c.data.seed, "data.seed")},
        {"train_fraction", setter(c.data.train_fraction, "data.train_fraction")}}},
      {"model",
       Section{{"family", setter(family, "model.family")},
        {"stage_widths", setter(c.model.stage_widths, "model.stage_widths")},
        {"blocks_per_stage", setter(c.model.blocks_per_stage, "model.blocks_per_stage")},
        {"projection_dim", setter(c.model.projection_dim, "model.projection_dim")},
        {"predictor_hidden", setter(c.model.predictor_hidden, "model.predictor_hidden")}}},
      {"sampler",
       Section{{"clip_len", setter(c.sampler.clip_len, "sampler.clip_len")},
        {"segments", setter(c.sampler.segments, "sampler.segments")},
        {"max_speed", setter(c.sampler.max_speed, "sampler.max_speed")}}},
      {"augment",
       Section{{"enabled", setter(c.augment.enabled, "augment.enabled")},
        {"crop_size", setter(c.augment.crop_size, "augment.crop_size")},
        {"flip_prob", setter(c.augment.flip_prob, "augment.flip_prob")},
        {"brightness", setter(c.augment.brightness, "augment.brightness")},
        {"contrast", setter(c.augment.contrast, "augment.contrast")},
        {"saturation", setter(c.augment.saturation, "augment.saturation")},
        {"hue", setter(c.augment.hue, "augment.hue")}}},
      {"optim",
       Section{{"batch_size", setter(c.optim.batch_size, "optim.batch_size")},
        {"momentum", setter(c.optim.momentum, "optim.momentum")},
        {"weight_decay", setter(c.optim.weight_decay, "optim.weight_decay")},
        {"lr_factor", setter(c.optim.lr_factor, "optim.lr_factor")},
        {"lr_step_epochs", setter(c.optim.lr_step_epochs, "optim.lr_step_epochs")}}},
      {"aux",
       Section{{"epochs", setter(c.aux.epochs, "aux.epochs")},
        {"lr", setter(c.aux.lr, "aux.lr")},
        {"bank_size", setter(c.aux.bank_size, "aux.bank_size")},
        {"momentum", setter(c.aux.momentum, "aux.momentum")},
        {"teacher_temp", setter(c.aux.teacher_temp, "aux.teacher_temp")},
        {"student_temp", setter(c.aux.student_temp, "aux.student_temp")}}},
      {"vspp",
       Section{{"epochs", setter(c.vspp.epochs, "vspp.epochs")},
        {"lr", setter(c.vspp.lr, "vspp.lr")},
        {"alpha", setter(c.vspp.alpha, "vspp.alpha")},
        {"beta", setter(c.vspp.beta, "vspp.beta")},
        {"eval_plans", setter(c.vspp.eval_plans, "vspp.eval_plans")},
        {"passes_per_epoch", setter(c.vspp.passes_per_epoch, "vspp.passes_per_epoch")},
        {"augment", setter(c.vspp.augment, "vspp.augment")}}},
      {"finetune",
       Section{{"epochs", setter(c.finetune.epochs, "finetune.epochs")},
        {"lr", setter(c.finetune.lr, "finetune.lr")},
        {"clips_per_video", setter(c.finetune.clips_per_video, "finetune.clips_per_video")}}},
  };

  if (root.IsMap()) {
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      if (key == "profile") continue;
      if (key == "seed") {
        setter(c.seed, "seed")(kv.second);
        continue;
      }
      auto it = sections.find(key);
      if (it == sections.end()) throw Error(Errc::InvalidParams, "config: unknown key '" + key + "'");
      apply_section(kv.second, key, it->second);
    }
  }
  c.model.family = models::parse_family(family);
  c.validate();
  return c;
}

RunConfig load(const std::filesystem::path& path, const std::string& profile_override) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_yaml(ss.str(), profile_override);
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a(to_yaml(config)); }

std::string hash_hex(std::uint64_t hash) { return fmt::format("{:016x}", hash); }

}  // namespace vspp::config
