// SPDX-License-Identifier: Apache-2.0
//
// Minimal layer library with explicit forward/backward passes. Each layer
// caches what it needs from the last training-mode forward and accumulates
// parameter gradients into `Parameter::grad` on backward.
#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vspp/rng.hpp"
#include "vspp/tensor.hpp"

namespace vspp::nn {

enum class Mode { Train, Eval };

struct Parameter {
  Tensor value;
  Tensor grad;

  Parameter() = default;
  explicit Parameter(Shape shape) : value(shape), grad(shape) {}
};

struct NamedParam {
  std::string name;
  Parameter* param;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

using ParamList = std::vector<NamedParam>;
using BufferList = std::vector<NamedBuffer>;

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual void collect_parameters(const std::string& /*prefix*/, ParamList& /*out*/) {}
  virtual void collect_buffers(const std::string& /*prefix*/, BufferList& /*out*/) {}
  virtual void reset_parameters(Rng& /*rng*/) {}
};

ParamList parameters_of(Layer& layer, const std::string& prefix = "");
BufferList buffers_of(Layer& layer, const std::string& prefix = "");
std::size_t parameter_count(Layer& layer);
void zero_grad(const ParamList& params);

using Triple = std::array<int, 3>;

struct Conv3dOptions {
  int in_channels = 0;
  int out_channels = 0;
  Triple kernel{3, 3, 3};
  Triple stride{1, 1, 1};
  Triple padding{1, 1, 1};
  bool bias = false;
};

/// 3-D convolution over (B, C, T, H, W) via im2col + GEMM.
class Conv3d final : public Layer {
 public:
  explicit Conv3d(Conv3dOptions opts);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList& out) override;
  void reset_parameters(Rng& rng) override;

  const Conv3dOptions& options() const { return opts_; }
  Shape output_shape(const Shape& input) const;

 private:
  Conv3dOptions opts_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

/// Batch normalization over axis 1 of a rank >= 2 input.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList& out) override;
  void collect_buffers(const std::string& prefix, BufferList& out) override;
  void reset_parameters(Rng& rng) override;

 private:
  int channels_;
  double momentum_;
  double eps_;
  Parameter gamma_;
  Parameter beta_;
  Tensor running_mean_;
  Tensor running_var_;
  Tensor normalized_;
  std::vector<double> inv_std_;
  Mode last_mode_ = Mode::Eval;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<bool> active_;
};

/// y = x W^T + b for x of shape (B, in).
class Linear final : public Layer {
 public:
  Linear(int in_features, int out_features);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList& out) override;
  void reset_parameters(Rng& rng) override;

  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_;
  int out_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

/// (B, C, ...) -> (B, C) by averaging every trailing axis.
class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Shape input_shape_;
};

/// Row-wise L2 normalization of a (B, D) input. A row with norm below 1e-12
/// raises DegenerateVector.
class L2Normalize final : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor output_;
  std::vector<double> norms_;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;

  Sequential& add(std::string name, std::unique_ptr<Layer> layer);
  template <class L, class... Args>
  L& emplace(std::string name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(name), std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList& out) override;
  void collect_buffers(const std::string& prefix, BufferList& out) override;
  void reset_parameters(Rng& rng) override;

  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Layer>>> layers_;
};

/// relu(main(x) + shortcut(x)); the shortcut is the identity when absent.
class Residual final : public Layer {
 public:
  Residual(std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, ParamList& out) override;
  void collect_buffers(const std::string& prefix, BufferList& out) override;
  void reset_parameters(Rng& rng) override;

 private:
  std::unique_ptr<Sequential> main_;
  std::unique_ptr<Sequential> shortcut_;
  ReLU relu_;
};

}  // namespace vspp::nn
