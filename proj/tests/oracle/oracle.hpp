// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations for tests. Nothing here calls into the library;
// inputs and outputs are plain vectors and callbacks.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------- sampling

struct Plan {
  int lambda = 1;
  int zeta = 1;
  std::int64_t fr = 0;
  std::vector<std::int64_t> indices;
};

/// Walks from the virtual frame f_r - 1, stepping lambda inside segment zeta
/// and 1 elsewhere. nullopt when the walk passes N - 1.
std::optional<std::vector<std::int64_t>> walk_indices(std::int64_t N, std::int64_t K, std::int64_t Z, int lambda,
                                                           int zeta, std::int64_t fr);

/// Every (lambda, zeta, f_r) whose plan fits in N frames, by scanning all
/// offsets in [0, N).
std::vector<Plan> brute_force_plans(std::int64_t N, std::int64_t K, std::int64_t Z, int Q);

// ---------------------------------------------------------------- high precision

/// Softmax evaluated with 50 significant digits, rounded to double.
std::vector<double> softmax_hp(std::span<const double> logits);
/// 1 - softmax(logits)[i] at 50 digits (resolves probabilities near 1).
double softmax_complement_hp(std::span<const double> logits, std::size_t i);
/// sum p (log p - log q) at 50 digits; terms with p == 0 contribute 0.
double kl_hp(std::span<const double> p, std::span<const double> q);
/// Mean cross-entropy of rows of logits against labels at 50 digits.
double cross_entropy_hp(std::span<const double> logits, std::size_t classes, std::span<const int> labels);

// ---------------------------------------------------------------- gradients

struct NonDeterministicLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Central differences (L(x + eps) - L(x - eps)) / 2 eps, perturbing `params`
/// in place and restoring each coordinate. Throws NonDeterministicLoss when
/// two evaluations at the unperturbed point differ.
std::vector<double> finite_diff_grad(const std::function<double()>& loss, std::span<double> params, double eps);

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0;
  double step = 0;
};

struct ProbeTensor {
  std::string name;
  std::span<double> values;
  std::vector<double> analytic;
};

/// Elementwise |a - n| / max(|a|, |n|, floor), maximized per tensor.
std::vector<GradCheckReport> grad_check(const std::function<double()>& loss, std::vector<ProbeTensor> tensors,
                                        double eps, double floor = 1e-6);

// ---------------------------------------------------------------- synthetic video

/// One RGB frame, row-major HWC.
using FrameFetch = std::function<std::vector<std::uint8_t>(std::int64_t index)>;

/// Foreground centroid of a frame: pixels brighter than the midpoint of the
/// frame's luminance range. Returns nullopt when there is no contrast.
std::optional<std::pair<double, double>> centroid(const std::vector<std::uint8_t>& rgb, int height, int width);

/// Mean centroid displacement between consecutive frames of `indices`.
double reference_speed_estimate(const FrameFetch& fetch, int height, int width,
                                std::span<const std::int64_t> indices);

enum class MotionGuess { Linear, Circular, Oscillating };

struct AppearanceGuess {
  MotionGuess motion = MotionGuess::Linear;
  double fill_ratio = 0;  // foreground area / bounding-box area, median over frames
  double circle_residual = 0;  // rms radial error of a circle fit, relative to its radius
  double speed_cv = 0;    // coefficient of variation of per-frame displacement
};

/// Motion from the centroid trajectory over `frames` frames, shape from the
/// foreground fill ratio.
AppearanceGuess classify_video(const FrameFetch& fetch, int height, int width, std::int64_t frames);

// ---------------------------------------------------------------- statistics

/// Pearson chi-square of counts against a uniform expectation.
double chi_square_uniform(std::span<const long> counts);
/// Upper critical value at `z` standard deviations (Wilson-Hilferty).
double chi_square_critical(int dof, double z);

}  // namespace oracle
