// SPDX-License-Identifier: Apache-2.0
#include "vspp/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "vspp/error.hpp"
#include "vspp/pretext.hpp"
#include "vspp/rng.hpp"

namespace vspp::eval {

std::vector<std::int64_t> clip_offsets(std::int64_t frames, std::int64_t clip_len, int clips) {
  if (clips < 1) throw Error(Errc::InvalidParams, "need at least one clip per video");
  if (frames < clip_len)
    throw Error(Errc::TooShort, "video has " + std::to_string(frames) + " frames, clip needs " + std::to_string(clip_len));
  const std::int64_t span = frames - clip_len;
  std::vector<std::int64_t> out;
  for (int i = 0; i < clips; ++i) {
    if (clips == 1) {
      out.push_back(0);
      continue;
    }
    // round-half-up of i * span / (n - 1) in integers
    const std::int64_t den = clips - 1;
    out.push_back((2 * i * span + den) / (2 * den));
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error(Errc::InvalidParams, "softmax of an empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= sum;
  return p;
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::InvalidParams, "argmax of an empty vector");
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

VideoPrediction evaluate_video(ClipScorer& model, const data::VideoSource& video, const EvalProtocol& protocol) {
  const auto offsets = clip_offsets(video.num_frames(), protocol.clip_len, protocol.clips_per_video);
  sampling::SamplerParams params;
  params.frames = video.num_frames();
  params.clip_len = protocol.clip_len;
  params.segments = 1;
  params.max_speed = 1;

  // Each clip is scored alone so its logits do not depend on batch mates, and
  // a running mean lets identical clip distributions average to themselves.
  VideoPrediction out;
  double seen = 0;
  for (auto offset : offsets) {
    const auto sample = sampling::uniform_pace_indices(params, 1, offset);
    const Tensor clip = augment::center_crop(data::decode_clip(video, sample), protocol.crop_size);
    const Tensor logits = model.score(stack(std::span<const Tensor>(&clip, 1)));
    const auto p = softmax(std::span<const double>(logits.ptr(), static_cast<std::size_t>(logits.dim(1))));
    if (out.probabilities.empty()) out.probabilities.assign(p.size(), 0.0);
    seen += 1;
    for (std::size_t c = 0; c < p.size(); ++c) out.probabilities[c] += (p[c] - out.probabilities[c]) / seen;
  }
  out.predicted = argmax(out.probabilities);
  return out;
}

double topk_accuracy(const std::vector<std::vector<double>>& probabilities, std::span<const int> labels, int k) {
  if (probabilities.size() != labels.size())
    throw Error(Errc::LengthMismatch, std::to_string(probabilities.size()) + " predictions for " +
                                          std::to_string(labels.size()) + " labels");
  if (k < 1) throw Error(Errc::InvalidParams, "k must be >= 1");
  if (labels.empty()) return 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& p = probabilities[i];
    const int y = labels[i];
    if (y < 0 || y >= static_cast<int>(p.size())) throw Error(Errc::LabelOutOfRange, "label outside class range");
    // rank of y: classes scoring higher, or equal with a lower index, come first
    int ahead = 0;
    for (int c = 0; c < static_cast<int>(p.size()); ++c)
      if (p[c] > p[y] || (p[c] == p[y] && c < y)) ++ahead;
    hits += ahead < k;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

EvalResult evaluate_dataset(ClipScorer& model, std::span<const data::VideoSource* const> videos,
                            const EvalProtocol& protocol) {
  EvalResult r;
  std::vector<std::vector<double>> probs;
  for (const auto* v : videos) {
    const auto label = v->label();
    if (!label) throw Error(Errc::InvalidParams, "video '" + v->id() + "' has no label");
    r.labels.push_back(*label);
    r.predictions.push_back(evaluate_video(model, *v, protocol));
    probs.push_back(r.predictions.back().probabilities);
  }
  r.top1 = topk_accuracy(probs, r.labels, 1);
  return r;
}

FinetuneEpoch finetune_epoch(models::ClassifierNet& net, std::span<const pipeline::VideoRef> videos,
                             const FinetuneConfig& config, int epoch, nn::Sgd& optimizer) {
  const nn::ParamList params = nn::parameters_of(net);
  FinetuneEpoch rec;
  rec.epoch = epoch;
  rec.lr = config.schedule.lr_at(epoch);
  const auto e = static_cast<std::uint64_t>(epoch);
  int seen = 0, correct = 0;
  double loss_sum = 0;
  for (const auto& batch : pipeline::epoch_batches(videos, config.batch_size, config.views.seed, e)) {
    std::vector<Tensor> clips;
    std::vector<int> labels;
    for (const auto& ref : batch) {
      const auto label = ref.video->label();
      if (!label) throw Error(Errc::InvalidParams, "video '" + ref.video->id() + "' has no label");
      clips.push_back(pipeline::make_natural_view(ref, config.views, e, 0));
      labels.push_back(*label);
    }
    nn::zero_grad(params);
    const Tensor logits = net.forward(stack(clips), nn::Mode::Train);
    Tensor grad;
    const double loss = pretext::cross_entropy(logits, labels, &grad);
    net.backward(grad);
    optimizer.step(params, rec.lr);
    const auto pred = pretext::argmax_rows(logits);
    for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
    loss_sum += loss * static_cast<double>(labels.size());
    seen += static_cast<int>(labels.size());
  }
  if (seen > 0) {
    rec.loss = loss_sum / seen;
    rec.train_accuracy = static_cast<double>(correct) / seen;
  }
  return rec;
}

std::vector<FinetuneEpoch> finetune(models::ClassifierNet& net, std::span<const pipeline::VideoRef> videos,
                                    const FinetuneConfig& config, nn::Sgd& optimizer, int first_epoch,
                                    const std::function<void(const FinetuneEpoch&)>& on_epoch) {
  std::vector<FinetuneEpoch> history;
  for (int epoch = first_epoch; epoch <= config.epochs; ++epoch) {
    history.push_back(finetune_epoch(net, videos, config, epoch, optimizer));
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

models::ClassifierNet make_classifier(const models::EncoderConfig& config, int num_classes, std::uint64_t seed,
                                      const nn::ParamList* encoder_params, const nn::BufferList* encoder_buffers) {
  models::ClassifierNet net(config, num_classes);
  Rng rng(derive_seed(seed, {stream::kInit}));
  net.reset_parameters(rng);
  if (encoder_params) models::copy_state(*encoder_params, nn::parameters_of(net), "encoder.");
  if (encoder_buffers) models::copy_buffers(*encoder_buffers, nn::buffers_of(net), "encoder.");
  return net;
}

AbSummary summarize(std::span<const AbRow> rows) {
  AbSummary s;
  if (rows.empty()) return s;
  for (const auto& r : rows) {
    s.mean_with += r.with_stage1;
    s.mean_without += r.without_stage1;
  }
  s.mean_with /= static_cast<double>(rows.size());
  s.mean_without /= static_cast<double>(rows.size());
  s.gap = s.mean_with - s.mean_without;
  return s;
}

void write_ab_report(const std::filesystem::path& path, std::span<const AbRow> rows, std::uint64_t config_hash) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << "# schema: vspp-ab/1\n";
  out << fmt::format("# config_hash: {:016x}\n", config_hash);
  out << "seed,top1_with_stage1,top1_without_stage1,gap\n";
  for (const auto& r : rows)
    out << fmt::format("{},{:.6f},{:.6f},{:+.6f}\n", r.seed, r.with_stage1, r.without_stage1,
                       r.with_stage1 - r.without_stage1);
  const auto s = summarize(rows);
  out << fmt::format("mean,{:.6f},{:.6f},{:+.6f}\n", s.mean_with, s.mean_without, s.gap);
}

}  // namespace vspp::eval
