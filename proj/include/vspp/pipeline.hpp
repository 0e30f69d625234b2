// SPDX-License-Identifier: Apache-2.0
//
// Clip preparation shared by every training stage: epoch batching and the
// sample -> decode -> augment chain, all keyed by (seed, epoch, video, view).
#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "vspp/augment.hpp"
#include "vspp/dataio.hpp"
#include "vspp/sampling.hpp"

namespace vspp::pipeline {

/// A video together with the stable key its random streams are derived from.
struct VideoRef {
  const data::VideoSource* video = nullptr;
  std::uint64_t key = 0;
};

std::vector<VideoRef> make_refs(std::span<const data::VideoSource* const> videos);

struct ViewSettings {
  sampling::SamplerParams sampler;  // `frames` is replaced by each video's length
  augment::AugmentPolicy augment;
  std::uint64_t seed = 0;
};

/// Draws a segment-pace plan for (epoch, video, view), decodes it and applies
/// that view's augmentation.
std::pair<Tensor, sampling::VsppSample> make_view(const VideoRef& ref, const ViewSettings& settings,
                                                  std::uint64_t epoch, std::uint64_t view);

/// Natural-pace clip (lambda = 1) at a random start offset, augmented.
Tensor make_natural_view(const VideoRef& ref, const ViewSettings& settings, std::uint64_t epoch, std::uint64_t view);

/// Shuffled batches for one pass of an epoch; a trailing batch smaller than
/// `batch_size` is dropped.
std::vector<std::vector<VideoRef>> epoch_batches(std::span<const VideoRef> videos, int batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch, std::uint64_t pass = 0);

}  // namespace vspp::pipeline
