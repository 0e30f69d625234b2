// SPDX-License-Identifier: Apache-2.0
//
// Downstream finetuning and the multi-clip video evaluation protocol.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vspp/augment.hpp"
#include "vspp/dataio.hpp"
#include "vspp/models.hpp"
#include "vspp/nn/optim.hpp"
#include "vspp/pipeline.hpp"

namespace vspp::eval {

struct EvalProtocol {
  int clips_per_video = 10;
  int clip_len = 8;
  int crop_size = 32;
};

/// Natural-pace start offsets round(i * (N - K) / (n - 1)), i = 0..n-1
/// (all zero when n == 1). TooShort when N < K.
std::vector<std::int64_t> clip_offsets(std::int64_t frames, std::int64_t clip_len, int clips);

/// Maps a clip batch (B, 3, K, H, W) to class logits (B, C).
class ClipScorer {
 public:
  virtual ~ClipScorer() = default;
  virtual Tensor score(const Tensor& clips) = 0;
};

/// Eval-mode forward of a classifier network.
class ClassifierScorer final : public ClipScorer {
 public:
  explicit ClassifierScorer(models::ClassifierNet& net) : net_(net) {}
  Tensor score(const Tensor& clips) override { return net_.forward(clips, nn::Mode::Eval); }

 private:
  models::ClassifierNet& net_;
};

std::vector<double> softmax(std::span<const double> logits);

/// Lowest index among the maxima.
int argmax(std::span<const double> values);

struct VideoPrediction {
  int predicted = 0;
  std::vector<double> probabilities;  // mean of per-clip softmaxes
};

/// Center-cropped natural-pace clips at `clip_offsets`, softmax averaged.
VideoPrediction evaluate_video(ClipScorer& model, const data::VideoSource& video, const EvalProtocol& protocol);

/// Fraction of rows whose label is among the k largest entries (ties broken
/// toward lower indices). LengthMismatch when sizes differ.
double topk_accuracy(const std::vector<std::vector<double>>& probabilities, std::span<const int> labels, int k);

struct EvalResult {
  double top1 = 0;
  std::vector<int> labels;
  std::vector<VideoPrediction> predictions;
};

/// Every video must carry a label.
EvalResult evaluate_dataset(ClipScorer& model, std::span<const data::VideoSource* const> videos,
                            const EvalProtocol& protocol);

struct FinetuneConfig {
  int epochs = 25;
  int batch_size = 8;
  nn::StepSchedule schedule{3e-3, 0.1, 6};
  nn::SgdOptions sgd;
  pipeline::ViewSettings views;  // sampler.clip_len and augmentation
};

struct FinetuneEpoch {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double train_accuracy = 0;
};

/// One pass over shuffled labelled videos with natural-pace random clips.
FinetuneEpoch finetune_epoch(models::ClassifierNet& net, std::span<const pipeline::VideoRef> videos,
                             const FinetuneConfig& config, int epoch, nn::Sgd& optimizer);

/// Runs epochs [first_epoch, config.epochs]; `on_epoch` sees every record.
std::vector<FinetuneEpoch> finetune(models::ClassifierNet& net, std::span<const pipeline::VideoRef> videos,
                                    const FinetuneConfig& config, nn::Sgd& optimizer, int first_epoch = 1,
                                    const std::function<void(const FinetuneEpoch&)>& on_epoch = {});

/// Classifier whose encoder (weights and BN statistics) is taken from
/// `encoder_source`, or freshly initialized from `seed` when it is null.
models::ClassifierNet make_classifier(const models::EncoderConfig& config, int num_classes, std::uint64_t seed,
                                      const nn::ParamList* encoder_params = nullptr,
                                      const nn::BufferList* encoder_buffers = nullptr);

struct AbRow {
  std::uint64_t seed = 0;
  double with_stage1 = 0;
  double without_stage1 = 0;
};

struct AbSummary {
  double mean_with = 0;
  double mean_without = 0;
  double gap = 0;  // mean_with - mean_without
};

AbSummary summarize(std::span<const AbRow> rows);

/// Plain-text CSV report of matched-seed runs with their means and gap.
void write_ab_report(const std::filesystem::path& path, std::span<const AbRow> rows, std::uint64_t config_hash);

}  // namespace vspp::eval
