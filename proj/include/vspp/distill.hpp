// SPDX-License-Identifier: Apache-2.0
//
// Similarity-based distillation from a momentum teacher to a student: both
// embed a view of the same video, each embedding is turned into a softmax
// distribution over a FIFO bank of past teacher embeddings, and the student
// is trained to match the teacher's distribution under KL divergence.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vspp/models.hpp"
#include "vspp/nn/optim.hpp"
#include "vspp/pipeline.hpp"

namespace vspp::distill {

/// Fixed-capacity ring of unit-norm anchors. Enqueueing B rows at capacity
/// evicts exactly the B oldest.
class MemoryBank {
 public:
  MemoryBank(int capacity, int dim);

  /// vectors: (B, dim), every row unit-norm within 1e-4.
  void enqueue(const Tensor& vectors);

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int fill() const { return fill_; }
  int cursor() const { return cursor_; }

  /// Filled rows in storage order, (fill, dim). Softmaxes are taken over these.
  Tensor anchors() const;
  /// Filled rows oldest first.
  Tensor anchors_by_age() const;

  const Tensor& storage() const { return storage_; }
  /// Reinstates a saved ring (checkpoint resume).
  void restore(Tensor storage, int cursor, int fill);

 private:
  int capacity_;
  int dim_;
  int cursor_ = 0;
  int fill_ = 0;
  Tensor storage_;
};

/// Softmax over fill rows of sim(z, x_i) / gamma with sim the dot product of
/// unit vectors. EmptyBank when nothing is filled.
std::vector<double> similarity_distribution(std::span<const double> z, const MemoryBank& bank, double gamma);

/// Row-wise version for a (B, dim) batch; returns (B, fill).
Tensor similarity_distributions(const Tensor& z, const MemoryBank& bank, double gamma);

/// sum_i p_i (log p_i - log q_i); zero-probability teacher entries contribute 0.
double kl_loss(std::span<const double> p_teacher, std::span<const double> p_student);
/// Summed over the batch rows of two (B, M) distributions.
double kl_loss(const Tensor& p_teacher, const Tensor& p_student);

struct DistillLoss {
  double loss = 0;
  Tensor p_teacher;     // (B, fill)
  Tensor p_student;     // (B, fill)
  Tensor grad_student;  // dL/dz_student, (B, dim)
};

/// Batch-summed KL between teacher and student similarity distributions with
/// its gradient with respect to the (unit) student embeddings.
DistillLoss distill_loss(const Tensor& z_teacher, const Tensor& z_student, const MemoryBank& bank,
                         double teacher_temp, double student_temp);

/// teacher <- m teacher + (1 - m) student for every teacher tensor; the
/// student's predictor has no teacher counterpart and is skipped.
void momentum_update(const nn::ParamList& teacher, const nn::ParamList& student, double m);

struct DistillPair {
  models::DistillNets nets;
  double momentum = 0.999;
  double teacher_temp = 0.02;
  double student_temp = 0.02;
};

struct AuxStepResult {
  double loss = 0;
  int bank_fill = 0;
  bool seeded_bank = false;   // bank was empty and got the batch before the loss
  double max_sum_error = 0;   // max |sum(p) - 1| over both distributions
};

/// One update on prepared views (Algorithm order): student forward on
/// `student_clips`, momentum update, teacher forward on `teacher_clips`,
/// distributions against the bank, enqueue teacher embeddings, SGD on the
/// student.
AuxStepResult aux_train_step(DistillPair& pair, MemoryBank& bank, const Tensor& student_clips,
                             const Tensor& teacher_clips, nn::Sgd& optimizer, double lr);

/// Full step from raw videos: two independent views per video.
AuxStepResult aux_train_step(DistillPair& pair, MemoryBank& bank, std::span<const pipeline::VideoRef> videos,
                             const pipeline::ViewSettings& settings, std::uint64_t epoch, nn::Sgd& optimizer, double lr);

}  // namespace vspp::distill
