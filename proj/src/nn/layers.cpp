// SPDX-License-Identifier: Apache-2.0
#include "vspp/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <random>

#include "vspp/error.hpp"

namespace vspp::nn {

using MatR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

ParamList parameters_of(Layer& layer, const std::string& prefix) {
  ParamList out;
  layer.collect_parameters(prefix, out);
  return out;
}

BufferList buffers_of(Layer& layer, const std::string& prefix) {
  BufferList out;
  layer.collect_buffers(prefix, out);
  return out;
}

std::size_t parameter_count(Layer& layer) {
  std::size_t n = 0;
  for (const auto& p : parameters_of(layer)) n += p.param->value.size();
  return n;
}

void zero_grad(const ParamList& params) {
  for (const auto& p : params) p.param->grad.fill(0);
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_({channels}),
      beta_({channels}),
      running_mean_({channels}),
      running_var_({channels}, 1.0) {
  gamma_.value.fill(1);
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  if (x.rank() < 2 || x.dim(1) != channels_)
    throw Error(Errc::ShapeMismatch, "batch norm over " + std::to_string(channels_) + " channels got " +
                                         shape_string(x.shape));
  const std::int64_t batch = x.dim(0);
  const std::int64_t inner = static_cast<std::int64_t>(x.size()) / (batch * channels_);
  const std::int64_t n = batch * inner;
  Tensor y(x.shape);
  last_mode_ = mode;
  if (mode == Mode::Train) {
    if (n < 2) throw Error(Errc::InvalidParams, "batch norm needs more than one value per channel when training");
    normalized_ = Tensor(x.shape);
    inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
  }
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0;
      for (std::int64_t b = 0; b < batch; ++b) {
        const Scalar* p = x.ptr() + (b * channels_ + c) * inner;
        for (std::int64_t i = 0; i < inner; ++i) sum += p[i];
      }
      mean = sum / static_cast<double>(n);
      double sq = 0;
      for (std::int64_t b = 0; b < batch; ++b) {
        const Scalar* p = x.ptr() + (b * channels_ + c) * inner;
        for (std::int64_t i = 0; i < inner; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / static_cast<double>(n);
      running_mean_[c] = (1 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] = (1 - momentum_) * running_var_[c] + momentum_ * sq / static_cast<double>(n - 1);
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    if (mode == Mode::Train) inv_std_[static_cast<std::size_t>(c)] = inv_std;
    const double g = gamma_.value[c];
    const double bt = beta_.value[c];
    for (std::int64_t b = 0; b < batch; ++b) {
      const std::int64_t off = (b * channels_ + c) * inner;
      for (std::int64_t i = 0; i < inner; ++i) {
        const double xh = (x.data[static_cast<std::size_t>(off + i)] - mean) * inv_std;
        if (mode == Mode::Train) normalized_.data[static_cast<std::size_t>(off + i)] = xh;
        y.data[static_cast<std::size_t>(off + i)] = g * xh + bt;
      }
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& dy) {
  if (last_mode_ != Mode::Train || normalized_.empty())
    throw Error(Errc::InvalidParams, "batch norm backward without a training-mode forward");
  require_shape(dy, normalized_.shape, "batch norm backward");
  const std::int64_t batch = dy.dim(0);
  const std::int64_t inner = static_cast<std::int64_t>(dy.size()) / (batch * channels_);
  const double n = static_cast<double>(batch * inner);
  Tensor dx(dy.shape);
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0, sum_dy_xh = 0;
    for (std::int64_t b = 0; b < batch; ++b) {
      const std::int64_t off = (b * channels_ + c) * inner;
      for (std::int64_t i = 0; i < inner; ++i) {
        const auto k = static_cast<std::size_t>(off + i);
        sum_dy += dy.data[k];
        sum_dy_xh += dy.data[k] * normalized_.data[k];
      }
    }
    gamma_.grad[c] += sum_dy_xh;
    beta_.grad[c] += sum_dy;
    const double scale = gamma_.value[c] * inv_std_[static_cast<std::size_t>(c)] / n;
    for (std::int64_t b = 0; b < batch; ++b) {
      const std::int64_t off = (b * channels_ + c) * inner;
      for (std::int64_t i = 0; i < inner; ++i) {
        const auto k = static_cast<std::size_t>(off + i);
        dx.data[k] = scale * (n * dy.data[k] - sum_dy - normalized_.data[k] * sum_dy_xh);
      }
    }
  }
  return dx;
}

void BatchNorm::collect_parameters(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + "weight", &gamma_});
  out.push_back({prefix + "bias", &beta_});
}

void BatchNorm::collect_buffers(const std::string& prefix, BufferList& out) {
  out.push_back({prefix + "running_mean", &running_mean_});
  out.push_back({prefix + "running_var", &running_var_});
}

void BatchNorm::reset_parameters(Rng&) {
  gamma_.value.fill(1);
  beta_.value.fill(0);
  running_mean_.fill(0);
  running_var_.fill(1);
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, Mode mode) {
  Tensor y(x.shape);
  if (mode == Mode::Train) active_.assign(x.size(), false);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool on = x.data[i] > 0;
    y.data[i] = on ? x.data[i] : 0;
    if (mode == Mode::Train) active_[i] = on;
  }
  return y;
}

Tensor ReLU::backward(const Tensor& dy) {
  if (dy.size() != active_.size()) throw Error(Errc::ShapeMismatch, "relu backward size mismatch");
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = active_[i] ? dy.data[i] : 0;
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features)
    : in_(in_features), out_(out_features), weight_({out_features, in_features}), bias_({out_features}) {
  if (in_ < 1 || out_ < 1) throw Error(Errc::InvalidParams, "linear features must be >= 1");
}

Tensor Linear::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw Error(Errc::ShapeMismatch, "linear expects (B, " + std::to_string(in_) + "), got " + shape_string(x.shape));
  const std::int64_t batch = x.dim(0);
  Tensor y({batch, out_});
  Eigen::Map<const MatR> xm(x.ptr(), batch, in_);
  Eigen::Map<const MatR> w(weight_.value.ptr(), out_, in_);
  Eigen::Map<MatR> ym(y.ptr(), batch, out_);
  ym.noalias() = xm * w.transpose();
  for (std::int64_t b = 0; b < batch; ++b)
    for (int o = 0; o < out_; ++o) ym(b, o) += bias_.value[static_cast<std::size_t>(o)];
  if (mode == Mode::Train) input_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  if (input_.empty()) throw Error(Errc::InvalidParams, "linear backward without a training-mode forward");
  const std::int64_t batch = input_.dim(0);
  require_shape(dy, {batch, out_}, "linear backward");
  Eigen::Map<const MatR> x(input_.ptr(), batch, in_);
  Eigen::Map<const MatR> g(dy.ptr(), batch, out_);
  Eigen::Map<const MatR> w(weight_.value.ptr(), out_, in_);
  Eigen::Map<MatR> dw(weight_.grad.ptr(), out_, in_);
  dw.noalias() += g.transpose() * x;
  for (std::int64_t b = 0; b < batch; ++b)
    for (int o = 0; o < out_; ++o) bias_.grad[static_cast<std::size_t>(o)] += g(b, o);
  Tensor dx({batch, in_});
  Eigen::Map<MatR> dxm(dx.ptr(), batch, in_);
  dxm.noalias() = g * w;
  return dx;
}

void Linear::collect_parameters(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + "weight", &weight_});
  out.push_back({prefix + "bias", &bias_});
}

void Linear::reset_parameters(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (auto& v : weight_.value.data) v = uniform(rng);
  for (auto& v : bias_.value.data) v = uniform(rng);
}

// ---------------------------------------------------------------- pooling

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  if (x.rank() < 2) throw Error(Errc::ShapeMismatch, "global pool needs rank >= 2, got " + shape_string(x.shape));
  const std::int64_t rows = x.dim(0) * x.dim(1);
  const std::int64_t inner = static_cast<std::int64_t>(x.size()) / rows;
  Tensor y({x.dim(0), x.dim(1)});
  for (std::int64_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::int64_t i = 0; i < inner; ++i) s += x.data[static_cast<std::size_t>(r * inner + i)];
    y.data[static_cast<std::size_t>(r)] = s / static_cast<double>(inner);
  }
  input_shape_ = x.shape;
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) {
  Tensor dx(input_shape_);
  const std::int64_t rows = static_cast<std::int64_t>(dy.size());
  const std::int64_t inner = static_cast<std::int64_t>(dx.size()) / rows;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double g = dy.data[static_cast<std::size_t>(r)] / static_cast<double>(inner);
    for (std::int64_t i = 0; i < inner; ++i) dx.data[static_cast<std::size_t>(r * inner + i)] = g;
  }
  return dx;
}

// ---------------------------------------------------------------- L2 normalize

Tensor L2Normalize::forward(const Tensor& x, Mode) {
  if (x.rank() != 2) throw Error(Errc::ShapeMismatch, "l2 normalize expects (B, D), got " + shape_string(x.shape));
  const std::int64_t rows = x.dim(0), d = x.dim(1);
  output_ = Tensor(x.shape);
  norms_.assign(static_cast<std::size_t>(rows), 0.0);
  for (std::int64_t r = 0; r < rows; ++r) {
    double sq = 0;
    for (std::int64_t i = 0; i < d; ++i) sq += x.data[static_cast<std::size_t>(r * d + i)] * x.data[static_cast<std::size_t>(r * d + i)];
    const double norm = std::sqrt(sq);
    if (!(norm >= 1e-12))
      throw Error(Errc::DegenerateVector, "row " + std::to_string(r) + " has norm " + std::to_string(norm) +
                                              " (collapsed embedding)");
    norms_[static_cast<std::size_t>(r)] = norm;
    for (std::int64_t i = 0; i < d; ++i)
      output_.data[static_cast<std::size_t>(r * d + i)] = x.data[static_cast<std::size_t>(r * d + i)] / norm;
  }
  return output_;
}

Tensor L2Normalize::backward(const Tensor& dy) {
  require_shape(dy, output_.shape, "l2 normalize backward");
  const std::int64_t rows = dy.dim(0), d = dy.dim(1);
  Tensor dx(dy.shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    double dot = 0;
    for (std::int64_t i = 0; i < d; ++i) dot += dy.data[static_cast<std::size_t>(r * d + i)] * output_.data[static_cast<std::size_t>(r * d + i)];
    const double inv = 1.0 / norms_[static_cast<std::size_t>(r)];
    for (std::int64_t i = 0; i < d; ++i) {
      const auto k = static_cast<std::size_t>(r * d + i);
      dx.data[k] = (dy.data[k] - output_.data[k] * dot) * inv;
    }
  }
  return dx;
}

// ---------------------------------------------------------------- containers

Sequential& Sequential::add(std::string name, std::unique_ptr<Layer> layer) {
  layers_.emplace_back(std::move(name), std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& [name, layer] : layers_) h = layer->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

void Sequential::collect_parameters(const std::string& prefix, ParamList& out) {
  for (auto& [name, layer] : layers_) layer->collect_parameters(prefix + name + ".", out);
}

void Sequential::collect_buffers(const std::string& prefix, BufferList& out) {
  for (auto& [name, layer] : layers_) layer->collect_buffers(prefix + name + ".", out);
}

void Sequential::reset_parameters(Rng& rng) {
  for (auto& [name, layer] : layers_) layer->reset_parameters(rng);
}

Residual::Residual(std::unique_ptr<Sequential> main, std::unique_ptr<Sequential> shortcut)
    : main_(std::move(main)), shortcut_(std::move(shortcut)) {}

Tensor Residual::forward(const Tensor& x, Mode mode) {
  Tensor a = main_->forward(x, mode);
  const Tensor s = shortcut_ ? shortcut_->forward(x, mode) : x;
  require_shape(s, a.shape, "residual sum");
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += s.data[i];
  return relu_.forward(a, mode);
}

Tensor Residual::backward(const Tensor& dy) {
  const Tensor g = relu_.backward(dy);
  Tensor dx = main_->backward(g);
  const Tensor ds = shortcut_ ? shortcut_->backward(g) : g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
  return dx;
}

void Residual::collect_parameters(const std::string& prefix, ParamList& out) {
  main_->collect_parameters(prefix + "main.", out);
  if (shortcut_) shortcut_->collect_parameters(prefix + "shortcut.", out);
}

void Residual::collect_buffers(const std::string& prefix, BufferList& out) {
  main_->collect_buffers(prefix + "main.", out);
  if (shortcut_) shortcut_->collect_buffers(prefix + "shortcut.", out);
}

void Residual::reset_parameters(Rng& rng) {
  main_->reset_parameters(rng);
  if (shortcut_) shortcut_->reset_parameters(rng);
}

}  // namespace vspp::nn
