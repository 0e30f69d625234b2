// SPDX-License-Identifier: Apache-2.0
#include "vspp/models.hpp"

#include <map>

#include "vspp/error.hpp"

namespace vspp::models {

using nn::Mode;

std::string to_string(Family family) {
  return family == Family::Plain3d ? "plain3d" : "factorized2p1d";
}

Family parse_family(const std::string& s) {
  if (s == "plain3d") return Family::Plain3d;
  if (s == "factorized2p1d") return Family::Factorized2p1d;
  throw Error(Errc::InvalidParams, "unknown encoder family '" + s + "'");
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidParams, m); };
  if (stage_widths.empty()) fail("encoder needs at least one stage");
  for (int w : stage_widths)
    if (w < 1) fail("stage widths must be >= 1");
  if (blocks_per_stage < 1) fail("blocks_per_stage must be >= 1");
  if (clip_len < 1 || height < 2 || width < 2) fail("input clip shape must be positive");
}

namespace {

// Appends one 3x3x3 convolution, or its (1x3x3 -> BN -> ReLU -> 3x1x1)
// factorization whose middle width matches the plain parameter budget.
void add_conv_unit(nn::Sequential& seq, const std::string& name, Family family, int in, int out, nn::Triple stride) {
  if (family == Family::Plain3d) {
    seq.emplace<nn::Conv3d>(name, nn::Conv3dOptions{in, out, {3, 3, 3}, stride, {1, 1, 1}, false});
    return;
  }
  const int mid = std::max(1, (27 * in * out) / (9 * in + 3 * out));
  seq.emplace<nn::Conv3d>(name + "_s", nn::Conv3dOptions{in, mid, {1, 3, 3}, {1, stride[1], stride[2]}, {0, 1, 1}, false});
  seq.emplace<nn::BatchNorm>(name + "_s_bn", mid);
  seq.emplace<nn::ReLU>(name + "_s_relu");
  seq.emplace<nn::Conv3d>(name + "_t", nn::Conv3dOptions{mid, out, {3, 1, 1}, {stride[0], 1, 1}, {1, 0, 0}, false});
}

std::unique_ptr<nn::Sequential> make_stem(Family family, int width) {
  auto stem = std::make_unique<nn::Sequential>();
  add_conv_unit(*stem, "conv", family, 3, width, {1, 2, 2});
  stem->emplace<nn::BatchNorm>("bn", width);
  stem->emplace<nn::ReLU>("relu");
  return stem;
}

std::unique_ptr<nn::Residual> make_block(Family family, int in, int out, int stride) {
  auto main = std::make_unique<nn::Sequential>();
  add_conv_unit(*main, "conv1", family, in, out, {stride, stride, stride});
  main->emplace<nn::BatchNorm>("bn1", out);
  main->emplace<nn::ReLU>("relu1");
  add_conv_unit(*main, "conv2", family, out, out, {1, 1, 1});
  main->emplace<nn::BatchNorm>("bn2", out);
  std::unique_ptr<nn::Sequential> shortcut;
  if (stride != 1 || in != out) {
    shortcut = std::make_unique<nn::Sequential>();
    shortcut->emplace<nn::Conv3d>("conv", nn::Conv3dOptions{in, out, {1, 1, 1}, {stride, stride, stride}, {0, 0, 0}, false});
    shortcut->emplace<nn::BatchNorm>("bn", out);
  }
  return std::make_unique<nn::Residual>(std::move(main), std::move(shortcut));
}

}  // namespace

Encoder::Encoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  net_.add("stem", make_stem(config_.family, config_.stage_widths.front()));
  int in = config_.stage_widths.front();
  for (std::size_t s = 0; s < config_.stage_widths.size(); ++s) {
    auto stage = std::make_unique<nn::Sequential>();
    const int out = config_.stage_widths[s];
    for (int b = 0; b < config_.blocks_per_stage; ++b) {
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      stage->add("block" + std::to_string(b), make_block(config_.family, in, out, stride));
      in = out;
    }
    net_.add("stage" + std::to_string(s + 1), std::move(stage));
  }
  net_.emplace<nn::GlobalAvgPool>("pool");
}

Tensor Encoder::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 5 || x.dim(1) != 3 || x.dim(2) != config_.clip_len || x.dim(3) != config_.height ||
      x.dim(4) != config_.width)
    throw Error(Errc::ShapeMismatch, "encoder expects (B, 3, " + std::to_string(config_.clip_len) + ", " +
                                         std::to_string(config_.height) + ", " + std::to_string(config_.width) +
                                         "), got " + shape_string(x.shape));
  return net_.forward(x, mode);
}

Tensor Encoder::backward(const Tensor& dy) { return net_.backward(dy); }
void Encoder::collect_parameters(const std::string& prefix, nn::ParamList& out) { net_.collect_parameters(prefix, out); }
void Encoder::collect_buffers(const std::string& prefix, nn::BufferList& out) { net_.collect_buffers(prefix, out); }
void Encoder::reset_parameters(Rng& rng) { net_.reset_parameters(rng); }

Tensor encode(Encoder& encoder, const Tensor& clip_batch, Mode mode) { return encoder.forward(clip_batch, mode); }

Tensor l2_normalize(const Tensor& vectors) {
  nn::L2Normalize norm;
  return norm.forward(vectors, Mode::Eval);
}

std::unique_ptr<nn::Sequential> make_predictor(int dim, int hidden) {
  auto mlp = std::make_unique<nn::Sequential>();
  mlp->emplace<nn::Linear>("fc1", dim, hidden);
  mlp->emplace<nn::BatchNorm>("bn1", hidden);
  mlp->emplace<nn::ReLU>("relu1");
  mlp->emplace<nn::Linear>("fc2", hidden, hidden);
  mlp->emplace<nn::BatchNorm>("bn2", hidden);
  mlp->emplace<nn::ReLU>("relu2");
  mlp->emplace<nn::Linear>("fc3", hidden, dim);
  return mlp;
}

// ---------------------------------------------------------------- student / teacher

StudentNet::StudentNet(const EncoderConfig& config, HeadDims dims)
    : encoder_(config),
      projection_(config.embedding_dim(), dims.projection),
      predictor_(make_predictor(dims.projection, dims.predictor_hidden)) {}

Tensor StudentNet::forward(const Tensor& x, Mode mode) {
  return norm_.forward(predictor_->forward(projection_.forward(encoder_.forward(x, mode), mode), mode), mode);
}

Tensor StudentNet::backward(const Tensor& dy) {
  return encoder_.backward(projection_.backward(predictor_->backward(norm_.backward(dy))));
}

void StudentNet::collect_parameters(const std::string& prefix, nn::ParamList& out) {
  encoder_.collect_parameters(prefix + "encoder.", out);
  projection_.collect_parameters(prefix + "projection.", out);
  predictor_->collect_parameters(prefix + "predictor.", out);
}

void StudentNet::collect_buffers(const std::string& prefix, nn::BufferList& out) {
  encoder_.collect_buffers(prefix + "encoder.", out);
  predictor_->collect_buffers(prefix + "predictor.", out);
}

void StudentNet::reset_parameters(Rng& rng) {
  encoder_.reset_parameters(rng);
  projection_.reset_parameters(rng);
  predictor_->reset_parameters(rng);
}

TeacherNet::TeacherNet(const EncoderConfig& config, HeadDims dims)
    : encoder_(config), projection_(config.embedding_dim(), dims.projection) {}

Tensor TeacherNet::forward(const Tensor& x, Mode mode) {
  return norm_.forward(projection_.forward(encoder_.forward(x, mode), mode), mode);
}

Tensor TeacherNet::backward(const Tensor&) {
  throw Error(Errc::InvalidParams, "the teacher network is updated by momentum only, never by gradient");
}

void TeacherNet::collect_parameters(const std::string& prefix, nn::ParamList& out) {
  encoder_.collect_parameters(prefix + "encoder.", out);
  projection_.collect_parameters(prefix + "projection.", out);
}

void TeacherNet::collect_buffers(const std::string& prefix, nn::BufferList& out) {
  encoder_.collect_buffers(prefix + "encoder.", out);
}

// ---------------------------------------------------------------- stage-2 / downstream nets

VsppNet::VsppNet(const EncoderConfig& config, int speeds, int segments)
    : encoder_(config), speed_head_(config.embedding_dim(), speeds) {
  if (segments > 1) segment_head_.emplace(config.embedding_dim(), segments);
}

VsppNet::Logits VsppNet::forward(const Tensor& x, Mode mode) {
  const Tensor features = encoder_.forward(x, mode);
  Logits out{speed_head_.forward(features, mode), {}};
  if (segment_head_) out.segment = segment_head_->forward(features, mode);
  return out;
}

void VsppNet::backward(const Tensor& grad_speed, const Tensor& grad_segment) {
  Tensor g = speed_head_.backward(grad_speed);
  if (segment_head_) {
    const Tensor gs = segment_head_->backward(grad_segment);
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += gs.data[i];
  }
  encoder_.backward(g);
}

nn::ParamList VsppNet::parameters() {
  nn::ParamList out;
  encoder_.collect_parameters("encoder.", out);
  speed_head_.collect_parameters("speed_head.", out);
  if (segment_head_) segment_head_->collect_parameters("segment_head.", out);
  return out;
}

nn::BufferList VsppNet::buffers() {
  nn::BufferList out;
  encoder_.collect_buffers("encoder.", out);
  return out;
}

void VsppNet::reset_heads(Rng& rng) {
  speed_head_.reset_parameters(rng);
  if (segment_head_) segment_head_->reset_parameters(rng);
}

ClassifierNet::ClassifierNet(const EncoderConfig& config, int num_classes)
    : encoder_(config), classifier_(config.embedding_dim(), num_classes) {}

Tensor ClassifierNet::forward(const Tensor& x, Mode mode) {
  return classifier_.forward(encoder_.forward(x, mode), mode);
}

Tensor ClassifierNet::backward(const Tensor& dy) { return encoder_.backward(classifier_.backward(dy)); }

void ClassifierNet::collect_parameters(const std::string& prefix, nn::ParamList& out) {
  encoder_.collect_parameters(prefix + "encoder.", out);
  classifier_.collect_parameters(prefix + "classifier.", out);
}

void ClassifierNet::collect_buffers(const std::string& prefix, nn::BufferList& out) {
  encoder_.collect_buffers(prefix + "encoder.", out);
}

void ClassifierNet::reset_parameters(Rng& rng) {
  encoder_.reset_parameters(rng);
  classifier_.reset_parameters(rng);
}

// ---------------------------------------------------------------- state transfer

namespace {

template <class List, class Get>
std::size_t copy_named(const List& src, const List& dst, const std::string& prefix, Get get) {
  std::map<std::string, Tensor*> targets;
  for (const auto& d : dst)
    if (d.name.starts_with(prefix)) targets[d.name] = get(d);
  std::size_t copied = 0;
  for (const auto& s : src) {
    if (!s.name.starts_with(prefix)) continue;
    auto it = targets.find(s.name);
    if (it == targets.end()) throw Error(Errc::ConfigMismatch, "no destination for '" + s.name + "'");
    const Tensor* from = get(s);
    if (from->shape != it->second->shape)
      throw Error(Errc::ShapeMismatch, "'" + s.name + "': " + shape_string(from->shape) + " vs " +
                                           shape_string(it->second->shape));
    it->second->data = from->data;
    targets.erase(it);
    ++copied;
  }
  if (!targets.empty()) throw Error(Errc::ConfigMismatch, "no source for '" + targets.begin()->first + "'");
  return copied;
}

}  // namespace

std::size_t copy_state(const nn::ParamList& src, const nn::ParamList& dst, const std::string& prefix) {
  return copy_named(src, dst, prefix, [](const nn::NamedParam& p) { return &p.param->value; });
}

std::size_t copy_buffers(const nn::BufferList& src, const nn::BufferList& dst, const std::string& prefix) {
  return copy_named(src, dst, prefix, [](const nn::NamedBuffer& b) { return b.tensor; });
}

DistillNets init_from_scratch(const EncoderConfig& config, HeadDims dims, std::uint64_t seed) {
  DistillNets nets{std::make_unique<StudentNet>(config, dims), std::make_unique<TeacherNet>(config, dims)};
  Rng rng(derive_seed(seed, {stream::kInit}));
  nets.student->reset_parameters(rng);
  const auto student = nn::parameters_of(*nets.student);
  const auto teacher = nn::parameters_of(*nets.teacher);
  copy_state(student, teacher, "encoder.");
  copy_state(student, teacher, "projection.");
  copy_buffers(nn::buffers_of(*nets.student), nn::buffers_of(*nets.teacher), "encoder.");
  return nets;
}

}  // namespace vspp::models
