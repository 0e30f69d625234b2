// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include <doctest.h>

#include "vspp/models.hpp"
#include "vspp/nn/layers.hpp"
#include "vspp/tensor.hpp"
#include "oracle.hpp"

namespace testutil {

inline vspp::Tensor random_tensor(vspp::Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  vspp::Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = u(rng);
  return t;
}

/// Scratch directory for one test, wiped on entry.
inline std::filesystem::path scratch(const std::string& name) {
  const char* env = std::getenv("VSPP_TEST_TMP");
  std::filesystem::path root = env ? env : std::filesystem::temp_directory_path() / "vspp_tests";
  auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Encoder small enough for finite differences (a few hundred weights).
inline vspp::models::EncoderConfig probe_encoder(vspp::models::Family family = vspp::models::Family::Plain3d) {
  vspp::models::EncoderConfig c;
  c.family = family;
  c.stage_widths = {2, 3};
  c.blocks_per_stage = 1;
  c.clip_len = 4;
  c.height = 6;
  c.width = 6;
  return c;
}

/// Weighted sum of the output with fixed random weights, so every output
/// element receives a distinct gradient.
struct Projection {
  vspp::Tensor weights;
  double operator()(const vspp::Tensor& y) const {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights[i] * y[i];
    return s;
  }
};

/// Finite-difference check of every parameter and of the input of `layer`
/// for the scalar loss sum(w * layer(x)).
inline double check_layer(vspp::nn::Layer& layer, vspp::Tensor x, vspp::nn::Mode mode = vspp::nn::Mode::Train,
                          std::uint64_t seed = 7, double eps = 1e-6) {
  const vspp::Tensor y0 = layer.forward(x, mode);
  const Projection proj{random_tensor(y0.shape, seed)};
  const auto params = vspp::nn::parameters_of(layer);
  vspp::nn::zero_grad(params);
  layer.forward(x, mode);
  const vspp::Tensor gx = layer.backward(proj.weights);

  std::vector<oracle::ProbeTensor> probes;
  for (const auto& p : params) probes.push_back({p.name, p.param->value.span(), p.param->grad.data});
  probes.push_back({"input", x.span(), gx.data});
  auto loss = [&] { return proj(layer.forward(x, mode)); };
  double worst = 0;
  // absolute floor above central-difference roundoff, for biases feeding BN
  for (const auto& r : oracle::grad_check(loss, probes, eps, 1e-5)) {
    INFO(r.name << " max rel error " << r.max_rel_error);
    CHECK(r.max_rel_error < 1e-3);
    worst = std::max(worst, r.max_rel_error);
  }
  return worst;
}

}  // namespace testutil
