// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "vspp/dataio.hpp"
#include "vspp/error.hpp"
#include "vspp/evalharness.hpp"

using namespace vspp;
using namespace vspp::eval;

namespace {

Errc code_of(auto fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Io;
}

/// Same logits for any input.
class ConstantScorer final : public ClipScorer {
 public:
  explicit ConstantScorer(std::vector<double> row) : row_(std::move(row)) {}
  Tensor score(const Tensor& clips) override {
    Tensor out({clips.dim(0), static_cast<std::int64_t>(row_.size())});
    for (std::int64_t b = 0; b < clips.dim(0); ++b)
      std::copy(row_.begin(), row_.end(), out.data.begin() + b * static_cast<std::ptrdiff_t>(row_.size()));
    ++calls;
    return out;
  }
  int calls = 0;

 private:
  std::vector<double> row_;
};

/// Logits from the clip's mean intensity, so different clips score differently.
class IntensityScorer final : public ClipScorer {
 public:
  Tensor score(const Tensor& clips) override {
    const std::int64_t per = static_cast<std::int64_t>(clips.size()) / clips.dim(0);
    Tensor out({clips.dim(0), 3});
    for (std::int64_t b = 0; b < clips.dim(0); ++b) {
      double m = 0;
      for (std::int64_t i = 0; i < per; ++i) m += clips[static_cast<std::size_t>(b * per + i)];
      m /= static_cast<double>(per);
      out[static_cast<std::size_t>(b * 3)] = 10 * m;
      out[static_cast<std::size_t>(b * 3 + 1)] = std::sin(50 * m);
      out[static_cast<std::size_t>(b * 3 + 2)] = -10 * m;
    }
    return out;
  }
};

data::Dataset small_dataset(int frames, int per_class = 1) {
  data::SynthSpec spec;
  spec.videos_per_class = per_class;
  spec.frames_per_video = frames;
  spec.frame_size = 16;
  return data::generate_synth_dataset(spec);
}

}  // namespace

TEST_SUITE("evalharness") {
  TEST_CASE("clip offsets follow the rounded uniform grid") {
    CHECK(clip_offsets(64, 8, 10) == std::vector<std::int64_t>{0, 6, 12, 19, 25, 31, 37, 44, 50, 56});
    CHECK(clip_offsets(8, 8, 10) == std::vector<std::int64_t>(10, 0));
    CHECK(clip_offsets(30, 8, 1) == std::vector<std::int64_t>{0});
    CHECK(code_of([] { clip_offsets(7, 8, 10); }) == Errc::TooShort);
    for (std::int64_t k : {8, 16})
      for (std::int64_t n = k; n <= 200; ++n)
        for (int clips : {2, 5, 10}) {
          const auto off = clip_offsets(n, k, clips);
          REQUIRE(off.size() == static_cast<std::size_t>(clips));
          CHECK(off.front() == 0);
          CHECK(off.back() == n - k);
          std::int64_t lo = n, hi = 0;
          for (int i = 0; i < clips; ++i) {
            const double exact = static_cast<double>(i) * static_cast<double>(n - k) / (clips - 1);
            CHECK(off[static_cast<std::size_t>(i)] == static_cast<std::int64_t>(std::floor(exact + 0.5)));
            if (i > 0) {
              const auto gap = off[static_cast<std::size_t>(i)] - off[static_cast<std::size_t>(i - 1)];
              lo = std::min(lo, gap);
              hi = std::max(hi, gap);
            }
          }
          CHECK(hi - lo <= 1);
        }
  }

  TEST_CASE("softmax and argmax") {
    const std::vector<double> logits{1.0, 2.0, 3.0, 3.0};
    const auto p = softmax(logits);
    const auto ref = oracle::softmax_hp(logits);
    double sum = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] == doctest::Approx(ref[i]).epsilon(1e-14));
      sum += p[i];
    }
    CHECK(std::abs(sum - 1) < 1e-12);
    CHECK(argmax(logits) == 2);
    CHECK(argmax(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 0);
    const auto big = softmax(std::vector<double>{1000.0, 0.0});
    CHECK(big[0] == 1.0);
  }

  TEST_CASE("a constant model predicts the same for the video as for one clip") {
    const auto ds = small_dataset(32);
    const std::vector<double> row{0.3, -1.2, 2.5, 2.5};
    EvalProtocol protocol{10, 8, 16};
    ConstantScorer model(row);
    const auto single = softmax(row);
    for (const auto& e : ds.entries) {
      const auto pred = evaluate_video(model, *e.video, protocol);
      CHECK(pred.probabilities == single);
      CHECK(pred.predicted == 2);
    }
    CHECK(model.calls == static_cast<int>(ds.entries.size()) * 10);
  }

  TEST_CASE("a clip as long as the video is evaluated once over") {
    const auto ds = small_dataset(8);
    const auto& v = *ds.entries[0].video;
    IntensityScorer model;
    const auto ten = evaluate_video(model, v, {10, 8, 16});
    const auto one = evaluate_video(model, v, {1, 8, 16});
    CHECK(ten.probabilities == one.probabilities);
    CHECK(ten.predicted == one.predicted);
    const auto short_ds = small_dataset(7);
    CHECK(code_of([&] { evaluate_video(model, *short_ds.entries[0].video, {10, 8, 16}); }) == Errc::TooShort);
  }

  TEST_CASE("the video distribution is the mean of clip softmaxes") {
    const auto ds = small_dataset(40);
    const auto& v = *ds.entries[1].video;
    IntensityScorer model;
    const EvalProtocol protocol{10, 8, 16};
    const auto pred = evaluate_video(model, v, protocol);
    std::vector<double> mean(3, 0.0);
    for (const auto off : clip_offsets(v.num_frames(), 8, 10)) {
      sampling::SamplerParams params;
      params.frames = v.num_frames();
      params.clip_len = 8;
      params.segments = 1;
      const Tensor clip = augment::center_crop(data::decode_clip(v, sampling::uniform_pace_indices(params, 1, off)), 16);
      Tensor batch = clip;
      batch.shape.insert(batch.shape.begin(), 1);
      const auto logits = model.score(batch);
      const auto p = oracle::softmax_hp(logits.data);
      for (int c = 0; c < 3; ++c) mean[static_cast<std::size_t>(c)] += p[static_cast<std::size_t>(c)] / 10;
    }
    double sum = 0;
    for (int c = 0; c < 3; ++c) {
      CHECK(pred.probabilities[static_cast<std::size_t>(c)] == doctest::Approx(mean[static_cast<std::size_t>(c)]).epsilon(1e-12));
      sum += pred.probabilities[static_cast<std::size_t>(c)];
    }
    CHECK(std::abs(sum - 1) < 1e-6);
  }

  TEST_CASE("top-k accuracy") {
    const std::vector<std::vector<double>> probs{{0.7, 0.2, 0.1}, {0.1, 0.3, 0.6}, {0.2, 0.5, 0.3}};
    CHECK(topk_accuracy(probs, std::vector<int>{0, 2, 1}, 1) == 1.0);
    CHECK(topk_accuracy(probs, std::vector<int>{0, 0, 0}, 1) == doctest::Approx(1.0 / 3));
    CHECK(topk_accuracy(probs, std::vector<int>{1, 0, 2}, 3) == 1.0);
    CHECK(topk_accuracy(probs, std::vector<int>{1, 0, 2}, 2) == doctest::Approx(2.0 / 3));
    // a tie at the boundary goes to the lower index
    const std::vector<std::vector<double>> tied{{0.4, 0.4, 0.2}};
    CHECK(topk_accuracy(tied, std::vector<int>{0}, 1) == 1.0);
    CHECK(topk_accuracy(tied, std::vector<int>{1}, 1) == 0.0);
    CHECK(topk_accuracy(tied, std::vector<int>{1}, 2) == 1.0);
    CHECK(code_of([&] { topk_accuracy(probs, std::vector<int>{0, 1}, 1); }) == Errc::LengthMismatch);
  }

  TEST_CASE("dataset evaluation is bit-deterministic") {
    const auto ds = small_dataset(24, 2);
    std::vector<const data::VideoSource*> videos;
    for (const auto& e : ds.entries) videos.push_back(e.video.get());
    auto enc = testutil::probe_encoder();
    enc.clip_len = 8;
    enc.height = enc.width = 16;
    auto net = make_classifier(enc, 4, 3);
    ClassifierScorer scorer(net);
    const EvalProtocol protocol{10, 8, 16};
    const auto a = evaluate_dataset(scorer, videos, protocol);
    const auto b = evaluate_dataset(scorer, videos, protocol);
    CHECK(a.top1 == b.top1);
    REQUIRE(a.predictions.size() == videos.size());
    for (std::size_t i = 0; i < videos.size(); ++i) {
      CHECK(a.predictions[i].probabilities == b.predictions[i].probabilities);
      CHECK(a.labels[i] == *videos[i]->label());
    }
  }

  TEST_CASE("finetuning overfits ten videos") {
    const auto ds = small_dataset(16, 5);
    std::vector<const data::VideoSource*> videos;
    for (const auto& e : ds.entries)
      if (*e.video->label() < 2) videos.push_back(e.video.get());
    REQUIRE(videos.size() == 10);
    const auto refs = pipeline::make_refs(videos);
    auto enc = testutil::probe_encoder();
    enc.stage_widths = {8, 16};
    enc.clip_len = 8;
    enc.height = enc.width = 16;
    auto net = make_classifier(enc, 2, 5);
    FinetuneConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 5;
    cfg.schedule = nn::StepSchedule{0.05, 0.1, 1000};
    cfg.sgd = {0.9, 0.0};
    cfg.views.sampler.clip_len = 8;
    cfg.views.augment.enabled = false;
    cfg.views.augment.crop_size = 16;
    nn::Sgd sgd(cfg.sgd);
    int calls = 0;
    const auto history = finetune(net, refs, cfg, sgd, 1, [&](const FinetuneEpoch&) { ++calls; });
    CHECK(history.size() == 60);
    CHECK(calls == 60);
    for (std::size_t i = 0; i < history.size(); ++i) CHECK(history[i].epoch == static_cast<int>(i) + 1);
    CHECK(history.back().train_accuracy == 1.0);
    ClassifierScorer scorer(net);
    CHECK(evaluate_dataset(scorer, videos, {10, 8, 16}).top1 == 1.0);

    // resuming part-way keeps the history length tied to the epoch range
    auto again = make_classifier(enc, 2, 5);
    nn::Sgd sgd2(cfg.sgd);
    CHECK(finetune(again, refs, cfg, sgd2, 51).size() == 10);
  }

  TEST_CASE("a/b summary and report") {
    const std::vector<AbRow> rows{{0, 0.5, 0.25}, {1, 0.75, 0.5}, {2, 0.25, 0.5}};
    const auto s = summarize(rows);
    CHECK(s.mean_with == doctest::Approx(0.5));
    CHECK(s.mean_without == doctest::Approx(5.0 / 12));
    CHECK(s.gap == doctest::Approx(1.0 / 12));
    const auto path = testutil::scratch("ab") / "ab.csv";
    write_ab_report(path, rows, 0xabcdefULL);
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    CHECK(first == "# schema: vspp-ab/1");
    const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(body.find("0000000000abcdef") != std::string::npos);
  }
}
