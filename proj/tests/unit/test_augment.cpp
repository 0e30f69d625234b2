// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"
#include "vspp/augment.hpp"
#include "vspp/error.hpp"

using namespace vspp;
using namespace vspp::augment;

namespace {

double at(const Tensor& clip, int c, int t, int y, int x) {
  const auto T = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  return clip[static_cast<std::size_t>(((c * T + t) * H + y) * W + x)];
}

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("center crop window") {
    const Tensor clip = testutil::random_tensor({3, 2, 36, 36}, 1, 0, 1);
    const Tensor out = center_crop(clip, 32);
    CHECK(out.shape == Shape{3, 2, 32, 32});
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < 2; ++t)
        for (int y = 0; y < 32; ++y)
          for (int x = 0; x < 32; ++x) CHECK(at(out, c, t, y, x) == at(clip, c, t, y + 2, x + 2));
    CHECK(center_crop(out, 32) == out);
    CHECK_THROWS_AS(center_crop(out, 33), Error);
  }

  TEST_CASE("disabled policy reduces to a center crop") {
    const Tensor clip = testutil::random_tensor({3, 4, 40, 40}, 2, 0, 1);
    AugmentPolicy policy;
    policy.enabled = false;
    CHECK(augment_clip(clip, policy, {1, 2, 3}) == center_crop(clip, 32));
  }

  TEST_CASE("same key gives the same view, other views differ") {
    const Tensor clip = testutil::random_tensor({3, 4, 40, 40}, 3, 0, 1);
    AugmentPolicy policy;
    policy.seed = 5;
    const Tensor a = augment_clip(clip, policy, {1, 7, 0});
    CHECK(augment_clip(clip, policy, {1, 7, 0}) == a);
    CHECK_FALSE(augment_clip(clip, policy, {1, 7, 1}) == a);
    CHECK(a.shape == Shape{3, 4, 32, 32});
    for (double v : a.data) CHECK((v >= 0 && v <= 1));
  }

  TEST_CASE("horizontal flip mirrors columns inside the crop") {
    const Tensor clip = testutil::random_tensor({3, 2, 8, 8}, 4, 0, 1);
    ClipTransform flip;
    flip.flip = true;
    const Tensor out = apply_transform(clip, flip, 8);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(at(out, c, 1, y, x) == doctest::Approx(at(clip, c, 1, y, 7 - x)));
    ClipTransform crop;
    crop.top = 1;
    crop.left = 2;
    crop.flip = true;
    const Tensor win = apply_transform(clip, crop, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(at(win, 0, 0, y, x) == doctest::Approx(at(clip, 0, 0, y + 1, 2 + 3 - x)));
  }

  TEST_CASE("one parameter set per clip: constant frames stay identical") {
    Tensor clip({3, 5, 34, 34});
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < 5; ++t)
        for (int i = 0; i < 34 * 34; ++i)
          clip[static_cast<std::size_t>((c * 5 + t) * 34 * 34 + i)] = 0.2 + 0.25 * c + 0.0001 * (i % 34);
    AugmentPolicy policy;
    for (std::uint64_t view = 0; view < 10; ++view) {
      const Tensor out = augment_clip(clip, policy, {0, 1, view});
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 32; ++y)
          for (int x = 0; x < 32; ++x) CHECK(at(out, c, 0, y, x) == at(out, c, 4, y, x));
    }
  }

  TEST_CASE("augmentation keeps temporal length and order") {
    Tensor clip({3, 6, 32, 32});
    for (int t = 0; t < 6; ++t)
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 32 * 32; ++i) clip[static_cast<std::size_t>((c * 6 + t) * 1024 + i)] = t / 10.0;
    AugmentPolicy policy;
    policy.brightness = policy.contrast = policy.saturation = policy.hue = 0;
    const Tensor out = augment_clip(clip, policy, {0, 0, 0});
    CHECK(out.dim(1) == 6);
    for (int t = 1; t < 6; ++t) CHECK(at(out, 0, t, 3, 3) > at(out, 0, t - 1, 3, 3));
  }

  TEST_CASE("colour jitter identities") {
    const Tensor clip = testutil::random_tensor({3, 2, 4, 4}, 6, 0.1, 0.9);
    CHECK(apply_transform(clip, ClipTransform{}, 4) == clip);
    ClipTransform dark;
    dark.brightness = 0.5;
    const Tensor d = apply_transform(clip, dark, 4);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(clip[i] * 0.5));
    ClipTransform gray;
    gray.saturation = 0;
    const Tensor g = apply_transform(clip, gray, 4);
    for (int y = 0; y < 4; ++y) CHECK(at(g, 0, 0, y, 1) == doctest::Approx(at(g, 2, 0, y, 1)));
  }

  TEST_CASE("too small input") {
    AugmentPolicy policy;
    CHECK_THROWS_AS(augment_clip(Tensor({3, 2, 16, 16}), policy, {}), Error);
  }
}
