// SPDX-License-Identifier: Apache-2.0
#include "vspp/pretext.hpp"

#include <algorithm>
#include <cmath>

#include "vspp/checkpoint.hpp"
#include "vspp/error.hpp"
#include "vspp/rng.hpp"

namespace vspp::pretext {

double cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad) {
  if (logits.rank() != 2) throw Error(Errc::ShapeMismatch, "logits must be (B, C), got " + shape_string(logits.shape));
  const std::int64_t rows = logits.dim(0);
  const std::int64_t classes = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != rows)
    throw Error(Errc::LengthMismatch, std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  if (rows == 0) throw Error(Errc::InvalidParams, "empty batch");
  if (grad) *grad = Tensor({rows, classes});
  double total = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= classes)
      throw Error(Errc::LabelOutOfRange, "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    const Scalar* z = logits.ptr() + r * classes;
    const double mx = *std::max_element(z, z + classes);
    double sum = 0;
    for (std::int64_t c = 0; c < classes; ++c) sum += std::exp(z[c] - mx);
    const double log_sum = mx + std::log(sum);
    total += log_sum - z[y];
    if (grad) {
      Scalar* g = grad->ptr() + r * classes;
      for (std::int64_t c = 0; c < classes; ++c) g[c] = std::exp(z[c] - log_sum) / static_cast<double>(rows);
      g[y] -= 1.0 / static_cast<double>(rows);
    }
  }
  return total / static_cast<double>(rows);
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw Error(Errc::ShapeMismatch, "logits must be (B, C), got " + shape_string(logits.shape));
  const std::int64_t classes = logits.dim(1);
  std::vector<int> out;
  for (std::int64_t r = 0; r < logits.dim(0); ++r) {
    const Scalar* z = logits.ptr() + r * classes;
    out.push_back(static_cast<int>(std::max_element(z, z + classes) - z));
  }
  return out;
}

VsppLoss vspp_loss(const Tensor& speed_logits, const Tensor& segment_logits, std::span<const int> speed_labels,
                   std::span<const int> segment_labels, VsppLossWeights weights) {
  if (!(weights.alpha >= 0) || !(weights.beta >= 0))
    throw Error(Errc::InvalidParams, "loss weights must be non-negative");
  VsppLoss out;
  out.speed = cross_entropy(speed_logits, speed_labels, &out.grad_speed);
  for (auto& g : out.grad_speed.data) g *= weights.alpha;
  if (!segment_logits.empty()) {
    if (segment_logits.dim(0) != speed_logits.dim(0))
      throw Error(Errc::ShapeMismatch, "speed and segment logits disagree on batch size");
    out.segment = cross_entropy(segment_logits, segment_labels, &out.grad_segment);
    for (auto& g : out.grad_segment.data) g *= weights.beta;
  }
  out.total = weights.alpha * out.speed + weights.beta * out.segment;
  return out;
}

namespace {

int count_matches(const std::vector<int>& predicted, std::span<const int> labels) {
  int n = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) n += predicted[i] == labels[i];
  return n;
}

}  // namespace

VsppStepResult vspp_train_step(models::VsppNet& net, const Tensor& clips, std::span<const int> speed_labels,
                               std::span<const int> segment_labels, VsppLossWeights weights, nn::Sgd& optimizer,
                               double lr) {
  const nn::ParamList params = net.parameters();
  nn::zero_grad(params);
  const auto logits = net.forward(clips, nn::Mode::Train);
  VsppStepResult r;
  r.loss = vspp_loss(logits.speed, logits.segment, speed_labels, segment_labels, weights);
  net.backward(r.loss.grad_speed, r.loss.grad_segment);
  optimizer.step(params, lr);
  r.count = static_cast<int>(speed_labels.size());
  r.speed_correct = count_matches(argmax_rows(logits.speed), speed_labels);
  if (!logits.segment.empty()) r.segment_correct = count_matches(argmax_rows(logits.segment), segment_labels);
  r.speed_labels.assign(speed_labels.begin(), speed_labels.end());
  r.segment_labels.assign(segment_labels.begin(), segment_labels.end());
  return r;
}

VsppStepResult vspp_train_step(models::VsppNet& net, std::span<const pipeline::VideoRef> videos,
                               const pipeline::ViewSettings& settings, std::uint64_t epoch, VsppLossWeights weights,
                               nn::Sgd& optimizer, double lr, std::uint64_t view) {
  std::vector<Tensor> clips;
  std::vector<int> speeds, segments;
  for (const auto& ref : videos) {
    auto [clip, sample] = pipeline::make_view(ref, settings, epoch, view);
    clips.push_back(std::move(clip));
    speeds.push_back(sample.speed_label());
    segments.push_back(sample.segment_label());
  }
  return vspp_train_step(net, stack(clips), speeds, segments, weights, optimizer, lr);
}

VsppAccuracy evaluate_vspp(models::VsppNet& net, std::span<const pipeline::VideoRef> videos,
                           const pipeline::ViewSettings& settings, int plans_per_video, int batch_size) {
  if (plans_per_video < 1 || batch_size < 1) throw Error(Errc::InvalidParams, "plans and batch size must be >= 1");
  VsppAccuracy acc;
  std::vector<Tensor> clips;
  std::vector<int> speeds, segments;
  double speed_hits = 0, segment_hits = 0;

  auto flush = [&] {
    if (clips.empty()) return;
    const auto logits = net.forward(stack(clips), nn::Mode::Eval);
    const double n = static_cast<double>(clips.size());
    acc.speed_loss += cross_entropy(logits.speed, speeds, nullptr) * n;
    speed_hits += count_matches(argmax_rows(logits.speed), speeds);
    if (!logits.segment.empty()) {
      acc.segment_loss += cross_entropy(logits.segment, segments, nullptr) * n;
      segment_hits += count_matches(argmax_rows(logits.segment), segments);
    }
    acc.count += static_cast<int>(clips.size());
    clips.clear();
    speeds.clear();
    segments.clear();
  };

  for (const auto& ref : videos) {
    sampling::SamplerParams params = settings.sampler;
    params.frames = ref.video->num_frames();
    for (int plan = 0; plan < plans_per_video; ++plan) {
      Rng rng(derive_seed(settings.seed, {stream::kValidation, ref.key, static_cast<std::uint64_t>(plan)}));
      const auto sample = sampling::sample_vspp(params, rng);
      clips.push_back(augment::center_crop(data::decode_clip(*ref.video, sample), settings.augment.crop_size));
      speeds.push_back(sample.speed_label());
      segments.push_back(sample.segment_label());
      if (static_cast<int>(clips.size()) == batch_size) flush();
    }
  }
  flush();
  if (acc.count > 0) {
    acc.speed = speed_hits / acc.count;
    acc.segment = segment_hits / acc.count;
    acc.speed_loss /= acc.count;
    acc.segment_loss /= acc.count;
  }
  return acc;
}

models::VsppNet load_stage1_weights(const checkpoint::Checkpoint& ckpt, const models::EncoderConfig& expected,
                                    int speeds, int segments, std::uint64_t seed) {
  if (!(ckpt.encoder == expected))
    throw Error(Errc::ConfigMismatch, "checkpoint encoder (" + models::to_string(ckpt.encoder.family) +
                                          ") does not match the configured encoder (" +
                                          models::to_string(expected.family) + ")");
  models::VsppNet net(expected, speeds, segments);
  Rng rng(derive_seed(seed, {stream::kHeads}));
  net.reset_heads(rng);
  checkpoint::restore(ckpt.parameters, net.parameters(), "encoder.");
  checkpoint::restore(ckpt.buffers, net.buffers(), "encoder.");
  return net;
}

}  // namespace vspp::pretext
