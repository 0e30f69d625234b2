// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <map>

#include "helpers.hpp"
#include "vspp/dataio.hpp"
#include "vspp/error.hpp"
#include "vspp/sampling.hpp"

using namespace vspp;
using namespace vspp::data;

namespace {

oracle::FrameFetch fetch_of(const VideoSource& v) {
  return [&v](std::int64_t i) { return v.frame(i).rgb; };
}

Errc code_of(auto fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Io;
}

SynthVideoParams straight_line(double speed) {
  SynthVideoParams p;
  p.id = "line";
  p.frames = 24;
  p.size = 96;
  p.speed = speed;
  p.radius = 5;
  p.start_x = 8;
  p.start_y = 48;
  p.angle = 0;
  p.noise_amplitude = 6;
  p.noise_seed = 99;
  return p;
}

}  // namespace

TEST_SUITE("dataio") {
  TEST_CASE("dataset sizes and stratified splits") {
    SynthSpec spec;
    const auto ds = generate_synth_dataset(spec);
    CHECK(ds.entries.size() == 200);
    CHECK(ds.split(Split::Train).size() == 160);
    CHECK(ds.split(Split::Val).size() == 20);
    CHECK(ds.split(Split::Test).size() == 20);
    std::map<int, int> per_class;
    for (const auto* v : ds.split(Split::Val)) ++per_class[*v->label()];
    for (int c = 0; c < 4; ++c) CHECK(per_class[c] == 5);
  }

  TEST_CASE("regeneration is bit-identical and seeds matter") {
    SynthSpec spec;
    spec.videos_per_class = 5;
    const auto a = generate_synth_dataset(spec);
    const auto b = generate_synth_dataset(spec);
    for (std::size_t i = 0; i < a.entries.size(); ++i)
      for (std::int64_t t : {0, 17, 63}) CHECK(a.entries[i].video->frame(t) == b.entries[i].video->frame(t));
    spec.seed = 1;
    const auto c = generate_synth_dataset(spec);
    CHECK_FALSE(a.entries[0].video->frame(0) == c.entries[0].video->frame(0));
  }

  TEST_CASE("invalid specs are rejected") {
    SynthSpec spec;
    spec.num_classes = 0;
    CHECK(code_of([&] { generate_synth_dataset(spec); }) == Errc::InvalidSpec);
    spec = {};
    spec.frames_per_video = 0;
    CHECK(code_of([&] { generate_synth_dataset(spec); }) == Errc::InvalidSpec);
  }

  TEST_CASE("stride 2 of a speed-2 video moves like stride 1 of a speed-4 video") {
    const SynthVideo slow(straight_line(2.0));
    const SynthVideo fast(straight_line(4.0));
    const std::vector<std::int64_t> stride2{0, 2, 4, 6, 8, 10, 12, 14};
    const std::vector<std::int64_t> stride1{0, 1, 2, 3, 4, 5, 6, 7};
    const double a = oracle::reference_speed_estimate(fetch_of(slow), 96, 96, stride2);
    const double b = oracle::reference_speed_estimate(fetch_of(fast), 96, 96, stride1);
    CHECK(a == doctest::Approx(4.0).epsilon(0.125));
    CHECK(std::abs(a - b) < 0.5);
    // per-step displacement fields agree frame by frame
    for (std::size_t i = 0; i < stride1.size(); ++i) {
      const auto ca = oracle::centroid(slow.frame(stride2[i]).rgb, 96, 96);
      const auto cb = oracle::centroid(fast.frame(stride1[i]).rgb, 96, 96);
      REQUIRE(ca);
      REQUIRE(cb);
      CHECK(std::abs(ca->first - cb->first) < 0.5);
    }
  }

  TEST_CASE("linear motion at stride lambda moves lambda times the base speed") {
    for (int lambda = 1; lambda <= 4; ++lambda) {
      const SynthVideo v(straight_line(1.5));
      std::vector<std::int64_t> idx;
      for (int t = 0; t < 6; ++t) idx.push_back(t * lambda);
      CHECK(std::abs(oracle::reference_speed_estimate(fetch_of(v), 96, 96, idx) - 1.5 * lambda) < 0.5);
    }
    auto still = straight_line(0.0);
    const SynthVideo s(still);
    CHECK(oracle::reference_speed_estimate(fetch_of(s), 96, 96, std::vector<std::int64_t>{0, 1, 2, 3}) < 0.5);
  }

  TEST_CASE("labels are recoverable from raw pixels") {
    SynthSpec spec;
    const auto ds = generate_synth_dataset(spec);
    int correct = 0;
    for (const auto& e : ds.entries) {
      const auto* v = e.video.get();
      const auto def = spec.class_def(*v->label());
      const auto guess = oracle::classify_video(fetch_of(*v), v->height(), v->width(), v->num_frames());
      const auto motion = guess.motion == oracle::MotionGuess::Linear     ? MotionKind::Linear
                          : guess.motion == oracle::MotionGuess::Circular ? MotionKind::Circular
                                                                          : MotionKind::Oscillating;
      const auto shape = guess.fill_ratio > 0.88 ? ShapeKind::Square : ShapeKind::Disk;
      correct += motion == def.motion && shape == def.shape;
      if (motion != def.motion || shape != def.shape) MESSAGE(v->id() << " fill " << guess.fill_ratio << " circle " << guess.circle_residual << " cv " << guess.speed_cv);
    }
    CHECK(correct == static_cast<int>(ds.entries.size()));
  }

  TEST_CASE("decode reads exactly the planned frames") {
    SynthSpec spec;
    spec.videos_per_class = 1;
    spec.frames_per_video = 20;
    const auto ds = generate_synth_dataset(spec);
    const auto& v = *ds.entries[0].video;
    sampling::SamplerParams p;
    p.frames = 20;
    p.clip_len = 16;
    const auto plan = sampling::vspp_indices(p, 2, 2, 0);
    const Tensor clip = decode_clip(v, plan);
    CHECK(clip.shape == Shape{3, 16, 32, 32});
    for (int t = 0; t < 16; ++t) {
      const Frame f = v.frame(plan.indices[static_cast<std::size_t>(t)]);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 32; y += 7)
          for (int x = 0; x < 32; x += 5)
            CHECK(clip[((static_cast<std::size_t>(c) * 16 + t) * 32 + y) * 32 + x] == f.at(y, x, c) / 255.0);
    }
    CHECK(decode_clip(v, plan) == clip);
    const auto first = sampling::vspp_indices(p, 1, 1, 0);
    const Tensor head = decode_clip(v, first);
    CHECK(head[0] == v.frame(0).at(0, 0, 0) / 255.0);
    auto bad = plan;
    bad.indices.back() = 20;
    CHECK(code_of([&] { decode_clip(v, bad); }) == Errc::OutOfRange);
    for (double x : clip.data) CHECK((x >= 0 && x <= 1));
  }

  TEST_CASE("frame directories: count, ordering, lazy decoding, errors") {
    const auto dir = testutil::scratch("framedir");
    SynthSpec spec;
    spec.videos_per_class = 1;
    spec.frames_per_video = 16;
    const auto ds = generate_synth_dataset(spec);
    const auto& v = *ds.entries[0].video;
    std::filesystem::create_directories(dir / "a");
    std::filesystem::create_directories(dir / "b");
    // unpadded names would sort wrongly as strings
    for (int t = 0; t < 16; ++t) write_ppm(dir / "a" / (std::to_string(t) + ".ppm"), v.frame(t));
    const auto loaded = load_frame_dir(dir / "a");
    CHECK(loaded->num_frames() == 16);
    for (int t = 0; t < 16; ++t) CHECK(loaded->frame(t) == v.frame(t));

    // a shuffled copy with zero-padded names is the same video
    std::vector<int> order(16);
    std::iota(order.begin(), order.end(), 0);
    std::reverse(order.begin(), order.end());
    for (int t : order) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%06d.ppm", t);
      write_ppm(dir / "b" / name, v.frame(t));
    }
    const auto copy = load_frame_dir(dir / "b");
    for (int t = 0; t < 16; ++t) CHECK(copy->frame(t) == loaded->frame(t));

    std::filesystem::create_directories(dir / "empty");
    CHECK(code_of([&] { load_frame_dir(dir / "empty"); }) == Errc::EmptyDirectory);

    std::filesystem::copy(dir / "b", dir / "c");
    std::ofstream(dir / "c" / "notes.txt") << "not an image";
    try {
      load_frame_dir(dir / "c");
      FAIL("expected UnreadableFrame");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::UnreadableFrame);
      CHECK(std::string(e.what()).find("notes.txt") != std::string::npos);
    }
    CHECK(code_of([&] { loaded->frame(16); }) == Errc::OutOfRange);
  }

  TEST_CASE("export and manifest round trip") {
    const auto dir = testutil::scratch("export");
    SynthSpec spec;
    spec.videos_per_class = 10;
    spec.frames_per_video = 12;
    const auto ds = generate_synth_dataset(spec);
    export_dataset(ds, dir);
    const auto rows = read_manifest(dir / "manifest.txt");
    CHECK(rows.size() == 40);
    const auto back = load_manifest_dataset(dir / "manifest.txt", dir);
    REQUIRE(back.entries.size() == ds.entries.size());
    CHECK(back.num_classes == 4);
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
      CHECK(back.entries[i].split == ds.entries[i].split);
      CHECK(back.entries[i].video->label() == ds.entries[i].video->label());
      CHECK(back.entries[i].video->id() == ds.entries[i].video->id());
      CHECK(back.entries[i].video->frame(11) == ds.entries[i].video->frame(11));
    }
  }
}
