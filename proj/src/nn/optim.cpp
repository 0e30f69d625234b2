// SPDX-License-Identifier: Apache-2.0
#include "vspp/nn/optim.hpp"

#include <cmath>

#include "vspp/error.hpp"

namespace vspp::nn {

void Sgd::step(const ParamList& params, double lr) {
  for (const auto& [name, p] : params) {
    auto [it, inserted] = velocity_.try_emplace(name, p->value.shape);
    Tensor& v = it->second;
    if (v.shape != p->value.shape)
      throw Error(Errc::ShapeMismatch, "optimizer state for '" + name + "' has shape " + shape_string(v.shape));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double g = p->grad.data[i] + opts_.weight_decay * p->value.data[i];
      v.data[i] = opts_.momentum * v.data[i] + g;
      p->value.data[i] -= lr * v.data[i];
    }
  }
}

double StepSchedule::lr_at(int epoch) const {
  if (epoch < 1) throw Error(Errc::InvalidParams, "epochs are 1-based");
  const int drops = step_epochs > 0 ? (epoch - 1) / step_epochs : 0;
  return base_lr * std::pow(factor, drops);
}

}  // namespace vspp::nn
