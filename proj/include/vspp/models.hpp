// SPDX-License-Identifier: Apache-2.0
//
// Residual 3-D encoders (plain 3x3x3 or factorized 1x3x3 + 3x1x1) and the
// heads attached to them in each training stage.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vspp/nn/layers.hpp"

namespace vspp::models {

enum class Family { Plain3d, Factorized2p1d };

std::string to_string(Family family);
Family parse_family(const std::string& s);

struct EncoderConfig {
  Family family = Family::Plain3d;
  std::vector<int> stage_widths{16, 32, 64, 128};
  int blocks_per_stage = 1;
  int clip_len = 8;
  int height = 32;
  int width = 32;

  int embedding_dim() const { return stage_widths.empty() ? 0 : stage_widths.back(); }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Stem (stride 1x2x2) followed by one residual stage per width; every stage
/// after the first halves T, H and W. Global average pooling yields (B, D_enc).
class Encoder final : public nn::Layer {
 public:
  explicit Encoder(EncoderConfig config);

  /// Throws ShapeMismatch unless x is (B, 3, K, H, W) per the config.
  Tensor forward(const Tensor& x, nn::Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, nn::ParamList& out) override;
  void collect_buffers(const std::string& prefix, nn::BufferList& out) override;
  void reset_parameters(Rng& rng) override;

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  nn::Sequential net_;
};

/// (B, 3, K, H, W) -> (B, D_enc).
Tensor encode(Encoder& encoder, const Tensor& clip_batch, nn::Mode mode = nn::Mode::Eval);

/// Row-wise unit vectors; DegenerateVector for a row with norm < 1e-12.
Tensor l2_normalize(const Tensor& vectors);

struct HeadDims {
  int projection = 128;
  int predictor_hidden = 1024;
};

/// Linear -> BN -> ReLU -> Linear -> BN -> ReLU -> Linear.
std::unique_ptr<nn::Sequential> make_predictor(int dim, int hidden);

/// Student path: encoder -> projection -> predictor -> L2.
class StudentNet final : public nn::Layer {
 public:
  StudentNet(const EncoderConfig& config, HeadDims dims);

  Tensor forward(const Tensor& x, nn::Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, nn::ParamList& out) override;
  void collect_buffers(const std::string& prefix, nn::BufferList& out) override;
  void reset_parameters(Rng& rng) override;

  Encoder& encoder() { return encoder_; }

 private:
  Encoder encoder_;
  nn::Linear projection_;
  std::unique_ptr<nn::Sequential> predictor_;
  nn::L2Normalize norm_;
};

/// Teacher path: encoder -> projection -> L2. Never trained by gradient.
class TeacherNet final : public nn::Layer {
 public:
  TeacherNet(const EncoderConfig& config, HeadDims dims);

  Tensor forward(const Tensor& x, nn::Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, nn::ParamList& out) override;
  void collect_buffers(const std::string& prefix, nn::BufferList& out) override;

  Encoder& encoder() { return encoder_; }

 private:
  Encoder encoder_;
  nn::Linear projection_;
  nn::L2Normalize norm_;
};

/// Encoder with a speed head (D -> Q) and, when Z > 1, a segment head (D -> Z).
class VsppNet {
 public:
  VsppNet(const EncoderConfig& config, int speeds, int segments);

  struct Logits {
    Tensor speed;
    Tensor segment;  // empty when the segment head is disabled
  };

  Logits forward(const Tensor& x, nn::Mode mode);
  void backward(const Tensor& grad_speed, const Tensor& grad_segment);
  nn::ParamList parameters();
  nn::BufferList buffers();
  void reset_heads(Rng& rng);

  Encoder& encoder() { return encoder_; }
  bool has_segment_head() const { return segment_head_.has_value(); }

 private:
  Encoder encoder_;
  nn::Linear speed_head_;
  std::optional<nn::Linear> segment_head_;
};

/// Encoder with a linear classifier, used for finetuning and evaluation.
class ClassifierNet final : public nn::Layer {
 public:
  ClassifierNet(const EncoderConfig& config, int num_classes);

  Tensor forward(const Tensor& x, nn::Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, nn::ParamList& out) override;
  void collect_buffers(const std::string& prefix, nn::BufferList& out) override;
  void reset_parameters(Rng& rng) override;

  Encoder& encoder() { return encoder_; }
  nn::Linear& classifier() { return classifier_; }
  int num_classes() const { return classifier_.out_features(); }

 private:
  Encoder encoder_;
  nn::Linear classifier_;
};

/// Copies values of every parameter/buffer in `src` whose name starts with
/// `prefix` into the identically named entry of `dst`. ShapeMismatch or
/// ConfigMismatch (missing name) on disagreement. Returns the number copied.
std::size_t copy_state(const nn::ParamList& src, const nn::ParamList& dst, const std::string& prefix);
std::size_t copy_buffers(const nn::BufferList& src, const nn::BufferList& dst, const std::string& prefix);

struct DistillNets {
  std::unique_ptr<StudentNet> student;
  std::unique_ptr<TeacherNet> teacher;
};

/// One random initialization of the student, copied into the teacher so both
/// start identical.
DistillNets init_from_scratch(const EncoderConfig& config, HeadDims dims, std::uint64_t seed);

}  // namespace vspp::models
