// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "vspp/nn/layers.hpp"

namespace vspp::nn {

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   v <- mu v + (g + wd w);  w <- w - lr v
class Sgd {
 public:
  explicit Sgd(SgdOptions opts = {}) : opts_(opts) {}

  void step(const ParamList& params, double lr);

  const SgdOptions& options() const { return opts_; }
  /// Momentum buffers keyed by parameter name.
  std::map<std::string, Tensor>& state() { return velocity_; }
  const std::map<std::string, Tensor>& state() const { return velocity_; }

 private:
  SgdOptions opts_;
  std::map<std::string, Tensor> velocity_;
};

/// Step decay: base * factor^floor((epoch - 1) / step_epochs), epochs 1-based.
struct StepSchedule {
  double base_lr = 1e-3;
  double factor = 0.1;
  int step_epochs = 6;

  double lr_at(int epoch) const;
};

}  // namespace vspp::nn
