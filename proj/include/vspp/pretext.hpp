// SPDX-License-Identifier: Apache-2.0
//
// Segment-pace prediction: classify the altered segment's speed (lambda) and
// its position (zeta) with a weighted sum of two cross-entropy losses.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vspp/models.hpp"
#include "vspp/nn/optim.hpp"
#include "vspp/pipeline.hpp"

namespace vspp::checkpoint {
struct Checkpoint;
}

namespace vspp::pretext {

struct VsppLossWeights {
  double alpha = 1.0;  // speed
  double beta = 1.0;   // segment
};

struct VsppLoss {
  double total = 0;
  double speed = 0;
  double segment = 0;
  Tensor grad_speed;    // dTotal / d speed_logits
  Tensor grad_segment;  // dTotal / d segment_logits (empty without a segment head)
};

/// Mean cross-entropy per sub-task; total = alpha * speed + beta * segment.
/// `segment_logits` may be empty (Z = 1), in which case the segment term is 0.
VsppLoss vspp_loss(const Tensor& speed_logits, const Tensor& segment_logits, std::span<const int> speed_labels,
                   std::span<const int> segment_labels, VsppLossWeights weights);

/// Cross-entropy averaged over rows, with its gradient (softmax - onehot) / B.
double cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad);

/// Lowest index among the maxima of each row.
std::vector<int> argmax_rows(const Tensor& logits);

struct VsppStepResult {
  VsppLoss loss;
  int speed_correct = 0;
  int segment_correct = 0;
  int count = 0;
  std::vector<int> speed_labels;
  std::vector<int> segment_labels;
};

/// One joint update on prepared clips and their plan labels.
VsppStepResult vspp_train_step(models::VsppNet& net, const Tensor& clips, std::span<const int> speed_labels,
                               std::span<const int> segment_labels, VsppLossWeights weights, nn::Sgd& optimizer,
                               double lr);

/// One plan per video drawn for (epoch, view), labels taken from each plan.
VsppStepResult vspp_train_step(models::VsppNet& net, std::span<const pipeline::VideoRef> videos,
                               const pipeline::ViewSettings& settings, std::uint64_t epoch, VsppLossWeights weights,
                               nn::Sgd& optimizer, double lr, std::uint64_t view = 0);

struct VsppAccuracy {
  double speed = 0;
  double segment = 0;
  double speed_loss = 0;
  double segment_loss = 0;
  int count = 0;
};

/// Evaluation-mode accuracy on a fixed set of plans: `plans_per_video`
/// plans per video drawn from a validation stream, centre-cropped.
VsppAccuracy evaluate_vspp(models::VsppNet& net, std::span<const pipeline::VideoRef> videos,
                           const pipeline::ViewSettings& settings, int plans_per_video, int batch_size);

/// Fresh stage-2 network whose encoder (weights and BN statistics) comes from
/// a stage-1 checkpoint; the projection/predictor are dropped and both heads
/// are initialized from `seed`. ConfigMismatch when the encoder differs.
models::VsppNet load_stage1_weights(const checkpoint::Checkpoint& ckpt, const models::EncoderConfig& expected,
                                    int speeds, int segments, std::uint64_t seed);

}  // namespace vspp::pretext
