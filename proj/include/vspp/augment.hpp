// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "vspp/tensor.hpp"

namespace vspp::augment {

struct AugmentPolicy {
  int crop_size = 32;
  double flip_prob = 0.5;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  bool enabled = true;
  std::uint64_t seed = 0;
};

/// Identifies one augmented view; parameters are drawn from a stream keyed by
/// (policy.seed, epoch, video, view), so two views of one video differ.
struct ViewKey {
  std::uint64_t epoch = 0;
  std::uint64_t video = 0;
  std::uint64_t view = 0;
};

/// Parameters shared by every frame of one augmented clip.
struct ClipTransform {
  int top = 0;
  int left = 0;
  bool flip = false;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;  // fraction of a full turn
};

ClipTransform draw_transform(const AugmentPolicy& policy, const ViewKey& key, int height, int width);

/// Applies `transform` to a (3, T, H, W) clip; output is (3, T, crop, crop) in [0, 1].
Tensor apply_transform(const Tensor& clip, const ClipTransform& transform, int crop_size);

/// Random crop + horizontal flip + colour jitter, drawn once per clip. With
/// the policy disabled this reduces to `center_crop`.
Tensor augment_clip(const Tensor& clip, const AugmentPolicy& policy, const ViewKey& key);

Tensor center_crop(const Tensor& clip, int crop_size);

}  // namespace vspp::augment
