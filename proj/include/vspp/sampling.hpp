// SPDX-License-Identifier: Apache-2.0
//
// Frame-index arithmetic for segment-pace clips: a clip of K frames split into
// Z equal segments, one of which (zeta) is read at stride lambda while every
// other segment keeps the natural stride of 1.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vspp/rng.hpp"

namespace vspp::sampling {

struct SamplerParams {
  std::int64_t frames = 0;    // N, source length
  std::int64_t clip_len = 0;  // K
  std::int64_t segments = 4;  // Z
  std::int64_t max_speed = 4; // Q
  std::uint64_t seed = 0;

  std::int64_t segment_len() const { return clip_len / segments; }

  /// Throws InvalidParams on a broken invariant (K % Z, 1 <= Z <= K, Q >= 1, K <= N).
  void validate() const;
};

struct VsppSample {
  int speed = 1;            // lambda, 1..Q
  int segment = 1;          // zeta, 1..Z
  std::int64_t offset = 0;  // f_r
  std::vector<std::int64_t> indices;

  int speed_label() const { return speed - 1; }
  int segment_label() const { return segment - 1; }

  bool operator==(const VsppSample&) const = default;
};

/// Largest source index touched by (lambda, f_r); independent of zeta.
std::int64_t max_index(const SamplerParams& params, int speed, std::int64_t offset);

/// Number of valid start offsets for `speed` (0 when the speed is infeasible).
std::int64_t offset_count(const SamplerParams& params, int speed);

/// Closed-form plan: segment zeta starts at I_b = f_r + (zeta-1)K/Z + (lambda-1)
/// and ends at I_e = I_b + lambda(K/Z - 1); later segments resume at I_e + 1.
VsppSample vspp_indices(const SamplerParams& params, int speed, int segment, std::int64_t offset);

/// The Z = 1 case of `vspp_indices`: stride lambda over the whole clip.
VsppSample uniform_pace_indices(const SamplerParams& params, int speed, std::int64_t offset);

/// Random plan. lambda and zeta are uniform; a (lambda, zeta) pair without a
/// valid offset is redrawn up to `kMaxRedraws` times before falling back to
/// lambda = 1. f_r is uniform over the valid offsets of the drawn pair.
VsppSample sample_vspp(const SamplerParams& params, Rng& rng);

inline constexpr int kMaxRedraws = 64;

/// Brute-force scan over every (lambda, zeta, f_r) triple. Indices are built by
/// stepping frame to frame rather than through the closed form, so the result
/// doubles as a test oracle for `vspp_indices`.
std::vector<VsppSample> enumerate_valid_samples(const SamplerParams& params);

/// Line-oriented record: "lambda=2 zeta=2 f_r=0 indices=0,1,2,...".
std::string to_record(const VsppSample& sample);

}  // namespace vspp::sampling
