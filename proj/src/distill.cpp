// SPDX-License-Identifier: Apache-2.0
#include "vspp/distill.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <map>

#include "vspp/error.hpp"

namespace vspp::distill {

using MatR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

constexpr double kUnitTolerance = 1e-4;

void require_unit_rows(const Tensor& v, int dim, const char* what) {
  if (v.rank() != 2 || v.dim(1) != dim)
    throw Error(Errc::DimMismatch, std::string(what) + ": expected (B, " + std::to_string(dim) + "), got " +
                                       shape_string(v.shape));
  for (std::int64_t r = 0; r < v.dim(0); ++r) {
    double sq = 0;
    for (int i = 0; i < dim; ++i) sq += v.data[static_cast<std::size_t>(r * dim + i)] * v.data[static_cast<std::size_t>(r * dim + i)];
    if (std::abs(std::sqrt(sq) - 1.0) > kUnitTolerance)
      throw Error(Errc::NotNormalized, std::string(what) + ": row " + std::to_string(r) + " has norm " +
                                           std::to_string(std::sqrt(sq)));
  }
}

// Row-wise log-softmax of z A^T / gamma, shape (B, fill).
Tensor log_similarity(const Tensor& z, const MemoryBank& bank, double gamma) {
  if (!(gamma > 0)) throw Error(Errc::InvalidParams, "temperature must be > 0");
  if (bank.fill() == 0) throw Error(Errc::EmptyBank, "memory bank holds no anchors");
  require_unit_rows(z, bank.dim(), "query");
  const std::int64_t rows = z.dim(0);
  const int m = bank.fill();
  Tensor logits({rows, m});
  Eigen::Map<const MatR> zm(z.ptr(), rows, bank.dim());
  Eigen::Map<const MatR> anchors(bank.storage().ptr(), m, bank.dim());
  Eigen::Map<MatR> lm(logits.ptr(), rows, m);
  lm.noalias() = zm * anchors.transpose() / gamma;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double mx = lm.row(r).maxCoeff();
    const double lse = mx + std::log((lm.row(r).array() - mx).exp().sum());
    lm.row(r).array() -= lse;
  }
  return logits;
}

Tensor exp_of(const Tensor& t) {
  Tensor out(t.shape);
  std::transform(t.data.begin(), t.data.end(), out.data.begin(), [](double v) { return std::exp(v); });
  return out;
}

double row_sum_error(const Tensor& p) {
  double worst = 0;
  const std::int64_t m = p.dim(1);
  for (std::int64_t r = 0; r < p.dim(0); ++r) {
    double s = 0;
    for (std::int64_t i = 0; i < m; ++i) s += p.data[static_cast<std::size_t>(r * m + i)];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace

// ---------------------------------------------------------------- bank

MemoryBank::MemoryBank(int capacity, int dim) : capacity_(capacity), dim_(dim) {
  if (capacity < 1 || dim < 1) throw Error(Errc::InvalidParams, "memory bank capacity and dim must be >= 1");
  storage_ = Tensor({capacity, dim});
}

void MemoryBank::enqueue(const Tensor& vectors) {
  require_unit_rows(vectors, dim_, "enqueue");
  for (std::int64_t r = 0; r < vectors.dim(0); ++r) {
    std::copy_n(vectors.data.begin() + r * dim_, dim_, storage_.data.begin() + static_cast<std::ptrdiff_t>(cursor_) * dim_);
    cursor_ = (cursor_ + 1) % capacity_;
    fill_ = std::min(fill_ + 1, capacity_);
  }
}

Tensor MemoryBank::anchors() const {
  Tensor out({fill_, dim_});
  std::copy_n(storage_.data.begin(), static_cast<std::size_t>(fill_) * dim_, out.data.begin());
  return out;
}

Tensor MemoryBank::anchors_by_age() const {
  Tensor out({fill_, dim_});
  const int start = fill_ < capacity_ ? 0 : cursor_;
  for (int i = 0; i < fill_; ++i) {
    const int src = (start + i) % capacity_;
    std::copy_n(storage_.data.begin() + static_cast<std::ptrdiff_t>(src) * dim_, dim_,
                out.data.begin() + static_cast<std::ptrdiff_t>(i) * dim_);
  }
  return out;
}

void MemoryBank::restore(Tensor storage, int cursor, int fill) {
  require_shape(storage, {capacity_, dim_}, "memory bank restore");
  if (cursor < 0 || cursor >= capacity_ || fill < 0 || fill > capacity_ || (fill < capacity_ && cursor != fill))
    throw Error(Errc::CorruptCheckpoint, "inconsistent memory bank cursor/fill");
  storage_ = std::move(storage);
  cursor_ = cursor;
  fill_ = fill;
}

// ---------------------------------------------------------------- distributions

std::vector<double> similarity_distribution(std::span<const double> z, const MemoryBank& bank, double gamma) {
  Tensor q({1, static_cast<std::int64_t>(z.size())});
  std::copy(z.begin(), z.end(), q.data.begin());
  if (static_cast<int>(z.size()) != bank.dim())
    throw Error(Errc::DimMismatch, "query dim " + std::to_string(z.size()) + " vs bank dim " + std::to_string(bank.dim()));
  return exp_of(log_similarity(q, bank, gamma)).data;
}

Tensor similarity_distributions(const Tensor& z, const MemoryBank& bank, double gamma) {
  return exp_of(log_similarity(z, bank, gamma));
}

double kl_loss(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw Error(Errc::LengthMismatch, "distributions of length " + std::to_string(p.size()) + " and " +
                                          std::to_string(q.size()));
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) total += p[i] * (std::log(p[i]) - std::log(q[i]));
  return total;
}

double kl_loss(const Tensor& p, const Tensor& q) {
  if (p.shape != q.shape || p.rank() != 2)
    throw Error(Errc::LengthMismatch, "distribution batches " + shape_string(p.shape) + " and " + shape_string(q.shape));
  const auto m = static_cast<std::size_t>(p.dim(1));
  double total = 0;
  for (std::int64_t r = 0; r < p.dim(0); ++r)
    total += kl_loss(p.span().subspan(static_cast<std::size_t>(r) * m, m), q.span().subspan(static_cast<std::size_t>(r) * m, m));
  return total;
}

DistillLoss distill_loss(const Tensor& z_teacher, const Tensor& z_student, const MemoryBank& bank,
                         double teacher_temp, double student_temp) {
  if (z_teacher.shape != z_student.shape)
    throw Error(Errc::DimMismatch, "teacher " + shape_string(z_teacher.shape) + " vs student " +
                                       shape_string(z_student.shape));
  const Tensor log_t = log_similarity(z_teacher, bank, teacher_temp);
  const Tensor log_s = log_similarity(z_student, bank, student_temp);
  DistillLoss out;
  out.p_teacher = exp_of(log_t);
  out.p_student = exp_of(log_s);
  const std::int64_t rows = log_t.dim(0);
  const std::int64_t m = log_t.dim(1);
  // Using log-probabilities directly keeps the loss finite when p_S underflows.
  Tensor grad_logits({rows, m});
  for (std::size_t k = 0; k < log_t.size(); ++k) {
    const double pt = out.p_teacher.data[k];
    if (pt > 0) out.loss += pt * (log_t.data[k] - log_s.data[k]);
    grad_logits.data[k] = (out.p_student.data[k] - pt) / student_temp;
  }
  out.grad_student = Tensor({rows, bank.dim()});
  Eigen::Map<const MatR> g(grad_logits.ptr(), rows, m);
  Eigen::Map<const MatR> anchors(bank.storage().ptr(), m, bank.dim());
  Eigen::Map<MatR> gz(out.grad_student.ptr(), rows, bank.dim());
  gz.noalias() = g * anchors;
  return out;
}

void momentum_update(const nn::ParamList& teacher, const nn::ParamList& student, double m) {
  if (!(m >= 0 && m <= 1)) throw Error(Errc::InvalidParams, "momentum must lie in [0, 1]");
  std::map<std::string, const nn::Parameter*> by_name;
  for (const auto& s : student) by_name[s.name] = s.param;
  for (const auto& t : teacher) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw Error(Errc::ShapeMismatch, "student has no tensor '" + t.name + "'");
    const Tensor& src = it->second->value;
    Tensor& dst = t.param->value;
    if (src.shape != dst.shape)
      throw Error(Errc::ShapeMismatch, "'" + t.name + "': teacher " + shape_string(dst.shape) + " vs student " +
                                           shape_string(src.shape));
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] = m * dst.data[i] + (1 - m) * src.data[i];
  }
}

// ---------------------------------------------------------------- training step

AuxStepResult aux_train_step(DistillPair& pair, MemoryBank& bank, const Tensor& student_clips,
                             const Tensor& teacher_clips, nn::Sgd& optimizer, double lr) {
  auto& student = *pair.nets.student;
  auto& teacher = *pair.nets.teacher;
  const nn::ParamList student_params = nn::parameters_of(student);
  const nn::ParamList teacher_params = nn::parameters_of(teacher);

  nn::zero_grad(student_params);
  const Tensor z_student = student.forward(student_clips, nn::Mode::Train);
  momentum_update(teacher_params, student_params, pair.momentum);
  const Tensor z_teacher = teacher.forward(teacher_clips, nn::Mode::Train);

  AuxStepResult result;
  if (bank.fill() == 0) {
    bank.enqueue(z_teacher);
    result.seeded_bank = true;
  }
  const DistillLoss loss = distill_loss(z_teacher, z_student, bank, pair.teacher_temp, pair.student_temp);
  if (!result.seeded_bank) bank.enqueue(z_teacher);

  student.backward(loss.grad_student);
  optimizer.step(student_params, lr);

  result.loss = loss.loss;
  result.bank_fill = bank.fill();
  result.max_sum_error = std::max(row_sum_error(loss.p_teacher), row_sum_error(loss.p_student));
  return result;
}

AuxStepResult aux_train_step(DistillPair& pair, MemoryBank& bank, std::span<const pipeline::VideoRef> videos,
                             const pipeline::ViewSettings& settings, std::uint64_t epoch, nn::Sgd& optimizer,
                             double lr) {
  std::vector<Tensor> student_views, teacher_views;
  for (const auto& ref : videos) {
    student_views.push_back(pipeline::make_view(ref, settings, epoch, 0).first);
    teacher_views.push_back(pipeline::make_view(ref, settings, epoch, 1).first);
  }
  return aux_train_step(pair, bank, stack(student_views), stack(teacher_views), optimizer, lr);
}

}  // namespace vspp::distill
