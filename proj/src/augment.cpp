// SPDX-License-Identifier: Apache-2.0
#include "vspp/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "vspp/error.hpp"
#include "vspp/rng.hpp"

namespace vspp::augment {

namespace {

void check_clip(const Tensor& clip, int crop_size) {
  if (clip.rank() != 4 || clip.dim(0) != 3)
    throw Error(Errc::ShapeMismatch, "expected a (3, T, H, W) clip, got " + shape_string(clip.shape));
  if (crop_size < 1 || clip.dim(2) < crop_size || clip.dim(3) < crop_size)
    throw Error(Errc::TooSmall, "clip " + std::to_string(clip.dim(2)) + "x" + std::to_string(clip.dim(3)) +
                                    " is smaller than crop " + std::to_string(crop_size));
}

}  // namespace

ClipTransform draw_transform(const AugmentPolicy& policy, const ViewKey& key, int height, int width) {
  ClipTransform tf;
  tf.top = (height - policy.crop_size) / 2;
  tf.left = (width - policy.crop_size) / 2;
  if (!policy.enabled) return tf;

  Rng rng(derive_seed(policy.seed, {stream::kAugment, key.epoch, key.video, key.view}));
  std::uniform_int_distribution<int> top(0, height - policy.crop_size);
  std::uniform_int_distribution<int> left(0, width - policy.crop_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto factor = [&](double strength) { return 1.0 + strength * (2 * unit(rng) - 1); };
  tf.top = top(rng);
  tf.left = left(rng);
  tf.flip = unit(rng) < policy.flip_prob;
  tf.brightness = factor(policy.brightness);
  tf.contrast = factor(policy.contrast);
  tf.saturation = factor(policy.saturation);
  tf.hue = policy.hue * (2 * unit(rng) - 1);
  return tf;
}

Tensor apply_transform(const Tensor& clip, const ClipTransform& tf, int crop_size) {
  check_clip(clip, crop_size);
  const std::int64_t t_len = clip.dim(1);
  const std::int64_t h = clip.dim(2);
  const std::int64_t w = clip.dim(3);
  if (tf.top < 0 || tf.left < 0 || tf.top + crop_size > h || tf.left + crop_size > w)
    throw Error(Errc::OutOfRange, "crop window outside the clip");
  const std::int64_t c = crop_size;
  Tensor out({3, t_len, c, c});
  const std::size_t in_plane = static_cast<std::size_t>(h * w);
  const std::size_t out_plane = static_cast<std::size_t>(c * c);
  const std::size_t in_ch = static_cast<std::size_t>(t_len) * in_plane;
  const std::size_t out_ch = static_cast<std::size_t>(t_len) * out_plane;

  // Hue rotation in YIQ space, folded into one RGB matrix. The inverse is
  // computed rather than tabulated so that a zero turn is an exact identity.
  static const Eigen::Matrix3d to_yiq = (Eigen::Matrix3d() << 0.299, 0.587, 0.114, 0.596, -0.274, -0.322, 0.211,
                                         -0.523, 0.312).finished();
  static const Eigen::Matrix3d from_yiq = to_yiq.inverse();
  const double angle = 2 * std::numbers::pi * tf.hue;
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
  rot(1, 1) = rot(2, 2) = std::cos(angle);
  rot(1, 2) = -std::sin(angle);
  rot(2, 1) = std::sin(angle);
  const Eigen::Matrix3d hue_rgb = from_yiq * rot * to_yiq;
  const bool jitter = tf.brightness != 1.0 || tf.contrast != 1.0 || tf.saturation != 1.0 || tf.hue != 0.0;

  for (std::int64_t t = 0; t < t_len; ++t) {
    double gray_mean = 0;
    std::vector<double> rgb(3 * out_plane);
    for (std::int64_t y = 0; y < c; ++y) {
      for (std::int64_t x = 0; x < c; ++x) {
        const std::int64_t sx = tf.left + (tf.flip ? c - 1 - x : x);
        const std::size_t src = static_cast<std::size_t>(t) * in_plane + static_cast<std::size_t>((tf.top + y) * w + sx);
        const std::size_t dst = static_cast<std::size_t>(y * c + x);
        for (std::size_t ch = 0; ch < 3; ++ch) rgb[ch * out_plane + dst] = clip.data[ch * in_ch + src];
      }
    }
    if (jitter) {
      for (std::size_t i = 0; i < out_plane; ++i) {
        for (std::size_t ch = 0; ch < 3; ++ch)
          rgb[ch * out_plane + i] = std::clamp(rgb[ch * out_plane + i] * tf.brightness, 0.0, 1.0);
        gray_mean += 0.299 * rgb[i] + 0.587 * rgb[out_plane + i] + 0.114 * rgb[2 * out_plane + i];
      }
      gray_mean /= static_cast<double>(out_plane);
      for (std::size_t i = 0; i < out_plane; ++i) {
        double r = rgb[i], g = rgb[out_plane + i], b = rgb[2 * out_plane + i];
        r = std::clamp(gray_mean + tf.contrast * (r - gray_mean), 0.0, 1.0);
        g = std::clamp(gray_mean + tf.contrast * (g - gray_mean), 0.0, 1.0);
        b = std::clamp(gray_mean + tf.contrast * (b - gray_mean), 0.0, 1.0);
        const double gray = 0.299 * r + 0.587 * g + 0.114 * b;
        r = std::clamp(gray + tf.saturation * (r - gray), 0.0, 1.0);
        g = std::clamp(gray + tf.saturation * (g - gray), 0.0, 1.0);
        b = std::clamp(gray + tf.saturation * (b - gray), 0.0, 1.0);
        if (tf.hue != 0.0) {
          const Eigen::Vector3d v = hue_rgb * Eigen::Vector3d(r, g, b);
          r = v[0], g = v[1], b = v[2];
        }
        rgb[i] = r;
        rgb[out_plane + i] = g;
        rgb[2 * out_plane + i] = b;
      }
    }
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t i = 0; i < out_plane; ++i)
        out.data[ch * out_ch + static_cast<std::size_t>(t) * out_plane + i] = std::clamp(rgb[ch * out_plane + i], 0.0, 1.0);
  }
  return out;
}

Tensor augment_clip(const Tensor& clip, const AugmentPolicy& policy, const ViewKey& key) {
  check_clip(clip, policy.crop_size);
  const ClipTransform tf = draw_transform(policy, key, static_cast<int>(clip.dim(2)), static_cast<int>(clip.dim(3)));
  return apply_transform(clip, tf, policy.crop_size);
}

Tensor center_crop(const Tensor& clip, int crop_size) {
  check_clip(clip, crop_size);
  ClipTransform tf;
  tf.top = static_cast<int>(clip.dim(2) - crop_size) / 2;
  tf.left = static_cast<int>(clip.dim(3) - crop_size) / 2;
  return apply_transform(clip, tf, crop_size);
}

}  // namespace vspp::augment
