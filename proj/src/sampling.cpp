// SPDX-License-Identifier: Apache-2.0
#include "vspp/sampling.hpp"

#include <random>

#include "vspp/error.hpp"

namespace vspp::sampling {

void SamplerParams::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidParams, msg); };
  if (max_speed < 1) fail("max speed Q must be >= 1");
  if (segments < 1 || segments > clip_len) fail("segment count Z must satisfy 1 <= Z <= K");
  if (clip_len % segments != 0) fail("clip length K must be divisible by segment count Z");
  if (clip_len > frames) fail("clip length K must not exceed source length N");
}

std::int64_t max_index(const SamplerParams& params, int speed, std::int64_t offset) {
  return offset + params.clip_len - 1 + static_cast<std::int64_t>(speed - 1) * params.segment_len();
}

std::int64_t offset_count(const SamplerParams& params, int speed) {
  const std::int64_t last_offset = params.frames - 1 - max_index(params, speed, 0);
  return last_offset < 0 ? 0 : last_offset + 1;
}

VsppSample vspp_indices(const SamplerParams& params, int speed, int segment, std::int64_t offset) {
  params.validate();
  if (speed < 1 || speed > params.max_speed)
    throw Error(Errc::InvalidParams, "speed " + std::to_string(speed) + " outside [1, " +
                                         std::to_string(params.max_speed) + "]");
  if (segment < 1 || segment > params.segments)
    throw Error(Errc::InvalidParams, "segment " + std::to_string(segment) + " outside [1, " +
                                         std::to_string(params.segments) + "]");
  if (offset < 0) throw Error(Errc::InvalidParams, "offset must be >= 0");
  if (max_index(params, speed, offset) > params.frames - 1)
    throw Error(Errc::OutOfRange, "plan (lambda=" + std::to_string(speed) + ", zeta=" + std::to_string(segment) +
                                      ", f_r=" + std::to_string(offset) + ") reads frame " +
                                      std::to_string(max_index(params, speed, offset)) + " but N-1 = " +
                                      std::to_string(params.frames - 1));

  const std::int64_t len = params.segment_len();
  const std::int64_t begin = offset + (segment - 1) * len + (speed - 1);
  const std::int64_t end = begin + speed * (len - 1);

  VsppSample s;
  s.speed = speed;
  s.segment = segment;
  s.offset = offset;
  s.indices.reserve(static_cast<std::size_t>(params.clip_len));
  for (std::int64_t seg = 1; seg <= params.segments; ++seg) {
    for (std::int64_t p = 0; p < len; ++p) {
      if (seg < segment)
        s.indices.push_back(offset + (seg - 1) * len + p);
      else if (seg == segment)
        s.indices.push_back(begin + speed * p);
      else
        s.indices.push_back(end + 1 + (seg - segment - 1) * len + p);
    }
  }
  return s;
}

VsppSample uniform_pace_indices(const SamplerParams& params, int speed, std::int64_t offset) {
  SamplerParams single = params;
  single.segments = 1;
  return vspp_indices(single, speed, 1, offset);
}

VsppSample sample_vspp(const SamplerParams& params, Rng& rng) {
  if (params.clip_len > params.frames)
    throw Error(Errc::Infeasible, "no valid plan: K=" + std::to_string(params.clip_len) +
                                      " exceeds N=" + std::to_string(params.frames));
  params.validate();
  std::uniform_int_distribution<int> speed_dist(1, static_cast<int>(params.max_speed));
  std::uniform_int_distribution<int> segment_dist(1, static_cast<int>(params.segments));

  int speed = 1;
  int segment = 1;
  bool found = false;
  for (int attempt = 0; attempt < kMaxRedraws && !found; ++attempt) {
    speed = speed_dist(rng);
    segment = segment_dist(rng);
    found = offset_count(params, speed) > 0;
  }
  if (!found) speed = 1;
  std::uniform_int_distribution<std::int64_t> offset_dist(0, offset_count(params, speed) - 1);
  return vspp_indices(params, speed, segment, offset_dist(rng));
}

std::vector<VsppSample> enumerate_valid_samples(const SamplerParams& params) {
  std::vector<VsppSample> out;
  const std::int64_t len = params.segment_len();
  for (int speed = 1; speed <= params.max_speed; ++speed) {
    for (int segment = 1; segment <= params.segments; ++segment) {
      for (std::int64_t offset = 0; offset < params.frames; ++offset) {
        // Walk from a virtual frame at f_r - 1; every step into the altered
        // segment advances by lambda, every other step by one.
        std::vector<std::int64_t> idx;
        std::int64_t cursor = offset - 1;
        for (std::int64_t t = 0; t < params.clip_len; ++t) {
          cursor += (t / len == segment - 1) ? speed : 1;
          idx.push_back(cursor);
        }
        if (idx.back() > params.frames - 1) continue;
        out.push_back(VsppSample{speed, segment, offset, std::move(idx)});
      }
    }
  }
  return out;
}

std::string to_record(const VsppSample& sample) {
  std::string s = "lambda=" + std::to_string(sample.speed) + " zeta=" + std::to_string(sample.segment) +
                  " f_r=" + std::to_string(sample.offset) + " speed_label=" + std::to_string(sample.speed_label()) +
                  " segment_label=" + std::to_string(sample.segment_label()) + " indices=";
  for (std::size_t i = 0; i < sample.indices.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(sample.indices[i]);
  }
  return s;
}

}  // namespace vspp::sampling
