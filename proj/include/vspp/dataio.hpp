// SPDX-License-Identifier: Apache-2.0
//
// Video sources: procedurally rendered moving shapes and on-disk frame
// directories, plus decoding of sampled index plans into clip tensors.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vspp/sampling.hpp"
#include "vspp/tensor.hpp"

namespace vspp::data {

/// 8-bit RGB frame, interleaved HWC.
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool operator==(const Frame&) const = default;
};

class VideoSource {
 public:
  virtual ~VideoSource() = default;

  virtual const std::string& id() const = 0;
  virtual std::int64_t num_frames() const = 0;
  virtual int height() const = 0;
  virtual int width() const = 0;
  virtual std::optional<int> label() const = 0;
  /// Valid for any index in [0, num_frames()); OutOfRange otherwise.
  virtual Frame frame(std::int64_t index) const = 0;
};

enum class MotionKind { Linear, Circular, Oscillating };
enum class ShapeKind { Disk, Square, Diamond, Cross };

std::string to_string(MotionKind kind);
std::string to_string(ShapeKind kind);

/// A class label is a (shape, motion) pair: motion = c % motions, shape = c / motions.
struct ClassDef {
  ShapeKind shape;
  MotionKind motion;
};

struct SynthSpec {
  int num_classes = 4;
  int videos_per_class = 50;
  int frames_per_video = 64;
  int frame_size = 32;
  std::vector<MotionKind> motion_kinds{MotionKind::Linear, MotionKind::Circular, MotionKind::Oscillating};
  double speed_min = 1.0;  // px/frame
  double speed_max = 2.0;
  int noise_amplitude = 6; // uniform additive noise in 8-bit levels
  std::uint64_t seed = 0;

  void validate() const;
  ClassDef class_def(int label) const;
};

/// Everything needed to render one synthetic video; pixel content is a pure
/// function of these fields and the frame index.
struct SynthVideoParams {
  std::string id;
  int label = 0;
  ShapeKind shape = ShapeKind::Disk;
  MotionKind motion = MotionKind::Linear;
  int frames = 64;
  int size = 32;
  double speed = 1.0;   // px/frame (tangential for circular, peak for oscillating)
  double radius = 5.0;  // shape half-extent
  double start_x = 16, start_y = 16;
  double angle = 0.0;   // heading (linear) or oscillation axis
  double phase = 0.0;   // start phase (circular, oscillating)
  double spin = 1.0;    // circular direction, sign only
  double orbit = 8.0;   // circular radius or oscillation amplitude
  std::uint8_t fg[3]{230, 230, 230};
  std::uint8_t bg[3]{60, 60, 60};
  int noise_amplitude = 6;
  std::uint64_t noise_seed = 0;
};

class SynthVideo final : public VideoSource {
 public:
  explicit SynthVideo(SynthVideoParams params);

  const std::string& id() const override { return params_.id; }
  std::int64_t num_frames() const override { return params_.frames; }
  int height() const override { return params_.size; }
  int width() const override { return params_.size; }
  std::optional<int> label() const override { return params_.label; }
  Frame frame(std::int64_t index) const override;

  const SynthVideoParams& params() const { return params_; }
  /// Shape center at (possibly fractional) time t.
  std::pair<double, double> center(double t) const;

 private:
  SynthVideoParams params_;
};

class FrameDirVideo final : public VideoSource {
 public:
  FrameDirVideo(std::string id, std::vector<std::filesystem::path> files, int height, int width,
                std::optional<int> label);

  const std::string& id() const override { return id_; }
  std::int64_t num_frames() const override { return static_cast<std::int64_t>(files_.size()); }
  int height() const override { return height_; }
  int width() const override { return width_; }
  std::optional<int> label() const override { return label_; }
  Frame frame(std::int64_t index) const override;

  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::string id_;
  std::vector<std::filesystem::path> files_;
  int height_;
  int width_;
  std::optional<int> label_;
};

enum class Split { Train, Val, Test };
std::string to_string(Split split);
Split parse_split(const std::string& s);

struct DatasetEntry {
  std::shared_ptr<const VideoSource> video;
  Split split = Split::Train;
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  int num_classes = 0;

  std::vector<const VideoSource*> split(Split which) const;
};

/// Renders nothing up front; frames are produced on access. Splits are
/// stratified per class, 80/10/10 in video order.
Dataset generate_synth_dataset(const SynthSpec& spec);

/// Builds a video from `<dir>/*` image files ordered by the numeric part of
/// their names. Headers are checked eagerly; pixels are decoded on access.
std::shared_ptr<FrameDirVideo> load_frame_dir(const std::filesystem::path& dir,
                                              std::optional<int> label = std::nullopt);

/// frame t of the result is source frame sample.indices[t], scaled to [0, 1];
/// shape (3, K, H, W).
Tensor decode_clip(const VideoSource& src, const sampling::VsppSample& sample);

// Binary PPM (P6) / PGM (P5), maxval 255.
void write_ppm(const std::filesystem::path& path, const Frame& frame);
Frame read_ppm(const std::filesystem::path& path);

/// Writes `<root>/<video_id>/frame_%06d.ppm` for every video plus
/// `<root>/manifest.txt`.
void export_dataset(const Dataset& dataset, const std::filesystem::path& root);

struct ManifestRow {
  std::string id;
  std::string path;
  std::int64_t frames = 0;
  int label = -1;
  Split split = Split::Train;
};

void write_manifest(const std::filesystem::path& file, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& file);

/// Loads every row of a manifest; relative paths resolve against `root`.
Dataset load_manifest_dataset(const std::filesystem::path& manifest, const std::filesystem::path& root);

}  // namespace vspp::data
