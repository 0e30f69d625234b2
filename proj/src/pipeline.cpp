// SPDX-License-Identifier: Apache-2.0
#include "vspp/pipeline.hpp"

#include <algorithm>

#include "vspp/error.hpp"
#include "vspp/rng.hpp"

namespace vspp::pipeline {

std::vector<VideoRef> make_refs(std::span<const data::VideoSource* const> videos) {
  std::vector<VideoRef> refs;
  refs.reserve(videos.size());
  for (const auto* v : videos) refs.push_back({v, fnv1a(v->id())});
  return refs;
}

std::pair<Tensor, sampling::VsppSample> make_view(const VideoRef& ref, const ViewSettings& settings,
                                                  std::uint64_t epoch, std::uint64_t view) {
  sampling::SamplerParams params = settings.sampler;
  params.frames = ref.video->num_frames();
  Rng rng(derive_seed(settings.seed, {stream::kSample, epoch, ref.key, view}));
  sampling::VsppSample sample = sampling::sample_vspp(params, rng);
  augment::AugmentPolicy policy = settings.augment;
  policy.seed = settings.seed;
  Tensor clip = augment::augment_clip(data::decode_clip(*ref.video, sample), policy, {epoch, ref.key, view});
  return {std::move(clip), std::move(sample)};
}

Tensor make_natural_view(const VideoRef& ref, const ViewSettings& settings, std::uint64_t epoch, std::uint64_t view) {
  sampling::SamplerParams params = settings.sampler;
  params.frames = ref.video->num_frames();
  params.segments = 1;
  if (params.clip_len > params.frames)
    throw Error(Errc::TooShort, "video '" + ref.video->id() + "' is shorter than one clip");
  Rng rng(derive_seed(settings.seed, {stream::kSample, epoch, ref.key, view}));
  std::uniform_int_distribution<std::int64_t> offset(0, params.frames - params.clip_len);
  const auto sample = sampling::uniform_pace_indices(params, 1, offset(rng));
  augment::AugmentPolicy policy = settings.augment;
  policy.seed = settings.seed;
  return augment::augment_clip(data::decode_clip(*ref.video, sample), policy, {epoch, ref.key, view});
}

std::vector<std::vector<VideoRef>> epoch_batches(std::span<const VideoRef> videos, int batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch, std::uint64_t pass) {
  if (batch_size < 1) throw Error(Errc::InvalidParams, "batch size must be >= 1");
  std::vector<VideoRef> order(videos.begin(), videos.end());
  Rng rng(derive_seed(seed, {stream::kShuffle, epoch, pass}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<VideoRef>> batches;
  for (std::size_t i = 0; i + static_cast<std::size_t>(batch_size) <= order.size(); i += static_cast<std::size_t>(batch_size))
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(i) + batch_size);
  return batches;
}

}  // namespace vspp::pipeline
