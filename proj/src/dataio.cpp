// SPDX-License-Identifier: Apache-2.0
#include "vspp/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vspp/error.hpp"
#include "vspp/rng.hpp"

namespace vspp::data {

namespace fs = std::filesystem;

std::string to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::Linear: return "linear";
    case MotionKind::Circular: return "circular";
    case MotionKind::Oscillating: return "oscillating";
  }
  return "?";
}

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Square: return "square";
    case ShapeKind::Diamond: return "diamond";
    case ShapeKind::Cross: return "cross";
  }
  return "?";
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw Error(Errc::InvalidSpec, "unknown split '" + s + "'");
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidSpec, m); };
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (videos_per_class < 1) fail("videos_per_class must be >= 1");
  if (frames_per_video < 1) fail("frames_per_video must be >= 1");
  if (frame_size < 16) fail("frame_size must be >= 16");
  if (motion_kinds.empty()) fail("motion_kinds must not be empty");
  if (num_classes > static_cast<int>(motion_kinds.size()) * 4)
    fail("num_classes exceeds the number of distinct (shape, motion) pairs");
  if (!(speed_min > 0) || speed_max < speed_min) fail("speed range must satisfy 0 < min <= max");
  if (noise_amplitude < 0 || noise_amplitude > 64) fail("noise_amplitude must be in [0, 64]");
}

ClassDef SynthSpec::class_def(int label) const {
  const int motions = static_cast<int>(motion_kinds.size());
  return ClassDef{static_cast<ShapeKind>((label / motions) % 4), motion_kinds[static_cast<std::size_t>(label % motions)]};
}

SynthVideo::SynthVideo(SynthVideoParams params) : params_(std::move(params)) {}

namespace {

// Folds x into [lo, hi] by reflecting at the walls.
double reflect(double x, double lo, double hi) {
  const double span = hi - lo;
  double u = std::fmod(x - lo, 2 * span);
  if (u < 0) u += 2 * span;
  return lo + (u <= span ? u : 2 * span - u);
}

double shape_sdf(ShapeKind shape, double dx, double dy, double r) {
  const double ax = std::abs(dx);
  const double ay = std::abs(dy);
  switch (shape) {
    case ShapeKind::Disk: return std::hypot(dx, dy) - r;
    case ShapeKind::Square: return std::max(ax, ay) - 0.85 * r;
    case ShapeKind::Diamond: return (ax + ay) * std::numbers::sqrt2 / 2 - 0.8 * r;
    case ShapeKind::Cross: {
      const double arm = 0.35 * r;
      return std::min(std::max(ax - r, ay - arm), std::max(ax - arm, ay - r));
    }
  }
  return 1e9;
}

}  // namespace

std::pair<double, double> SynthVideo::center(double t) const {
  const auto& p = params_;
  switch (p.motion) {
    case MotionKind::Linear: {
      const double lo = p.radius + 1;
      const double hi = p.size - 2 - p.radius;
      return {reflect(p.start_x + p.speed * t * std::cos(p.angle), lo, hi),
              reflect(p.start_y + p.speed * t * std::sin(p.angle), lo, hi)};
    }
    case MotionKind::Circular: {
      const double omega = p.speed / p.orbit;
      const double theta = p.phase + (p.spin >= 0 ? 1 : -1) * omega * t;
      return {p.start_x + p.orbit * std::cos(theta), p.start_y + p.orbit * std::sin(theta)};
    }
    case MotionKind::Oscillating: {
      const double omega = p.speed / p.orbit;
      const double s = p.orbit * std::sin(omega * t + p.phase);
      return {p.start_x + s * std::cos(p.angle), p.start_y + s * std::sin(p.angle)};
    }
  }
  return {p.start_x, p.start_y};
}

Frame SynthVideo::frame(std::int64_t index) const {
  if (index < 0 || index >= params_.frames)
    throw Error(Errc::OutOfRange, "frame " + std::to_string(index) + " of video '" + params_.id + "' with " +
                                      std::to_string(params_.frames) + " frames");
  const auto [cx, cy] = center(static_cast<double>(index));
  Frame f{params_.size, params_.size, std::vector<std::uint8_t>(static_cast<std::size_t>(params_.size) * params_.size * 3)};
  Rng rng(derive_seed(params_.noise_seed, {static_cast<std::uint64_t>(index)}));
  std::uniform_int_distribution<int> noise(-params_.noise_amplitude, params_.noise_amplitude);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const double cover = std::clamp(0.5 - shape_sdf(params_.shape, x - cx, y - cy, params_.radius), 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double v = params_.bg[c] * (1 - cover) + params_.fg[c] * cover + noise(rng);
        f.rgb[(static_cast<std::size_t>(y) * f.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return f;
}

std::vector<const VideoSource*> Dataset::split(Split which) const {
  std::vector<const VideoSource*> out;
  for (const auto& e : entries)
    if (e.split == which) out.push_back(e.video.get());
  return out;
}

Dataset generate_synth_dataset(const SynthSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.num_classes = spec.num_classes;
  const int n_train = spec.videos_per_class * 8 / 10;
  const int n_val = spec.videos_per_class / 10;
  const double size = spec.frame_size;
  for (int c = 0; c < spec.num_classes; ++c) {
    const ClassDef def = spec.class_def(c);
    for (int v = 0; v < spec.videos_per_class; ++v) {
      Rng rng(derive_seed(spec.seed, {stream::kSynth, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(v)}));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      SynthVideoParams p;
      char id[32];
      std::snprintf(id, sizeof id, "c%02d_v%04d", c, v);
      p.id = id;
      p.label = c;
      p.shape = def.shape;
      p.motion = def.motion;
      p.frames = spec.frames_per_video;
      p.size = spec.frame_size;
      p.speed = spec.speed_min + (spec.speed_max - spec.speed_min) * unit(rng);
      p.radius = 0.15 * size;
      p.orbit = 0.25 * size;
      p.spin = unit(rng) < 0.5 ? 1.0 : -1.0;
      p.phase = 2 * std::numbers::pi * unit(rng);
      if (def.motion == MotionKind::Linear) {
        const double lo = p.radius + 1;
        const double hi = size - 2 - p.radius;
        p.start_x = lo + (hi - lo) * unit(rng);
        p.start_y = lo + (hi - lo) * unit(rng);
        p.angle = 2 * std::numbers::pi * unit(rng);
      } else {
        p.start_x = size / 2 - 1 + 2 * unit(rng) - 1;
        p.start_y = size / 2 - 1 + 2 * unit(rng) - 1;
        p.angle = std::numbers::pi * unit(rng);
      }
      for (int ch = 0; ch < 3; ++ch) {
        p.bg[ch] = static_cast<std::uint8_t>(20 + 80 * unit(rng));
        p.fg[ch] = static_cast<std::uint8_t>(160 + 95 * unit(rng));
      }
      p.noise_amplitude = spec.noise_amplitude;
      p.noise_seed = rng();
      const Split split = v < n_train ? Split::Train : (v < n_train + n_val ? Split::Val : Split::Test);
      ds.entries.push_back({std::make_shared<SynthVideo>(std::move(p)), split});
    }
  }
  return ds;
}

// ---------------------------------------------------------------- PPM

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
bool next_token(std::istream& in, std::string& tok) {
  tok.clear();
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return true;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return !tok.empty();
}

struct PpmHeader {
  int width = 0;
  int height = 0;
  int channels = 3;
};

PpmHeader read_header(std::istream& in, const fs::path& path) {
  auto bad = [&](const std::string& why) {
    return Error(Errc::UnreadableFrame, path.filename().string() + ": " + why);
  };
  std::string magic, w, h, maxval;
  if (!next_token(in, magic) || (magic != "P6" && magic != "P5")) throw bad("not a binary PPM/PGM image");
  if (!next_token(in, w) || !next_token(in, h) || !next_token(in, maxval)) throw bad("truncated header");
  PpmHeader hdr;
  try {
    hdr.width = std::stoi(w);
    hdr.height = std::stoi(h);
    if (std::stoi(maxval) != 255) throw bad("only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw bad("malformed header");
  }
  if (hdr.width <= 0 || hdr.height <= 0) throw bad("non-positive dimensions");
  hdr.channels = magic == "P6" ? 3 : 1;
  return hdr;
}

PpmHeader probe_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::UnreadableFrame, path.filename().string() + ": cannot open");
  return read_header(in, path);
}

}  // namespace

void write_ppm(const fs::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.rgb.data()), static_cast<std::streamsize>(frame.rgb.size()));
}

Frame read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::UnreadableFrame, path.filename().string() + ": cannot open");
  const PpmHeader hdr = read_header(in, path);
  const std::size_t pixels = static_cast<std::size_t>(hdr.width) * hdr.height;
  std::vector<std::uint8_t> raw(pixels * hdr.channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw Error(Errc::UnreadableFrame, path.filename().string() + ": truncated pixel data");
  Frame f{hdr.height, hdr.width, {}};
  if (hdr.channels == 3) {
    f.rgb = std::move(raw);
  } else {
    f.rgb.resize(pixels * 3);
    for (std::size_t i = 0; i < pixels; ++i) f.rgb[3 * i] = f.rgb[3 * i + 1] = f.rgb[3 * i + 2] = raw[i];
  }
  return f;
}

// ---------------------------------------------------------------- frame dirs

FrameDirVideo::FrameDirVideo(std::string id, std::vector<fs::path> files, int height, int width,
                             std::optional<int> label)
    : id_(std::move(id)), files_(std::move(files)), height_(height), width_(width), label_(label) {}

Frame FrameDirVideo::frame(std::int64_t index) const {
  if (index < 0 || index >= num_frames())
    throw Error(Errc::OutOfRange, "frame " + std::to_string(index) + " of video '" + id_ + "'");
  Frame f = read_ppm(files_[static_cast<std::size_t>(index)]);
  if (f.height != height_ || f.width != width_)
    throw Error(Errc::UnreadableFrame, files_[static_cast<std::size_t>(index)].filename().string() +
                                           ": frame size differs from the rest of the video");
  return f;
}

namespace {

// Sort key: the last run of digits in the stem (numeric), then the full name.
struct FrameOrder {
  bool has_number = false;
  unsigned long long number = 0;
  std::string name;

  explicit FrameOrder(const fs::path& p) : name(p.filename().string()) {
    const std::string stem = p.stem().string();
    auto end = stem.find_last_of("0123456789");
    if (end == std::string::npos) return;
    auto begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
    has_number = true;
    number = std::stoull(stem.substr(begin, end - begin + 1));
  }

  auto key() const { return std::tuple(!has_number, number, name); }
};

}  // namespace

std::shared_ptr<FrameDirVideo> load_frame_dir(const fs::path& dir, std::optional<int> label) {
  if (!fs::is_directory(dir)) throw Error(Errc::EmptyDirectory, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  if (files.empty()) throw Error(Errc::EmptyDirectory, dir.string() + " contains no frames");
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return FrameOrder(a).key() < FrameOrder(b).key(); });

  int height = 0, width = 0;
  for (const auto& f : files) {
    const PpmHeader hdr = probe_ppm(f);
    if (height == 0) {
      height = hdr.height;
      width = hdr.width;
    } else if (hdr.height != height || hdr.width != width) {
      throw Error(Errc::UnreadableFrame, f.filename().string() + ": frame size differs from the rest of the video");
    }
  }
  return std::make_shared<FrameDirVideo>(dir.filename().string(), std::move(files), height, width, label);
}

Tensor decode_clip(const VideoSource& src, const sampling::VsppSample& sample) {
  const auto k = static_cast<std::int64_t>(sample.indices.size());
  const std::int64_t h = src.height();
  const std::int64_t w = src.width();
  for (auto i : sample.indices)
    if (i < 0 || i >= src.num_frames())
      throw Error(Errc::OutOfRange, "clip reads frame " + std::to_string(i) + " of '" + src.id() + "' with " +
                                        std::to_string(src.num_frames()) + " frames");
  Tensor clip({3, k, h, w});
  const std::size_t plane = static_cast<std::size_t>(h * w);
  for (std::int64_t t = 0; t < k; ++t) {
    const Frame f = src.frame(sample.indices[static_cast<std::size_t>(t)]);
    for (std::size_t px = 0; px < plane; ++px)
      for (std::size_t c = 0; c < 3; ++c)
        clip.data[(c * static_cast<std::size_t>(k) + static_cast<std::size_t>(t)) * plane + px] = f.rgb[px * 3 + c] / 255.0;
  }
  return clip;
}

// ---------------------------------------------------------------- manifests

void write_manifest(const fs::path& file, const std::vector<ManifestRow>& rows) {
  std::ofstream out(file);
  if (!out) throw Error(Errc::Io, "cannot write " + file.string());
  out << "# vspp-manifest v1\n# id path frames label split\n";
  for (const auto& r : rows)
    out << r.id << ' ' << r.path << ' ' << r.frames << ' ' << r.label << ' ' << to_string(r.split) << '\n';
}

std::vector<ManifestRow> read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::Io, "cannot read manifest " + file.string());
  std::vector<ManifestRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestRow r;
    std::string split;
    if (!(ss >> r.id >> r.path >> r.frames >> r.label >> split))
      throw Error(Errc::InvalidSpec, file.filename().string() + ":" + std::to_string(lineno) + ": malformed row");
    r.split = parse_split(split);
    rows.push_back(std::move(r));
  }
  return rows;
}

void export_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root);
  std::vector<ManifestRow> rows;
  for (const auto& e : dataset.entries) {
    const auto dir = root / e.video->id();
    fs::create_directories(dir);
    for (std::int64_t i = 0; i < e.video->num_frames(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%06lld.ppm", static_cast<long long>(i));
      write_ppm(dir / name, e.video->frame(i));
    }
    rows.push_back({e.video->id(), e.video->id(), e.video->num_frames(), e.video->label().value_or(-1), e.split});
  }
  write_manifest(root / "manifest.txt", rows);
}

Dataset load_manifest_dataset(const fs::path& manifest, const fs::path& root) {
  Dataset ds;
  for (const auto& row : read_manifest(manifest)) {
    fs::path p(row.path);
    if (p.is_relative()) p = root / p;
    auto video = load_frame_dir(p, row.label >= 0 ? std::optional<int>(row.label) : std::nullopt);
    if (video->num_frames() != row.frames)
      throw Error(Errc::InvalidSpec, "manifest lists " + std::to_string(row.frames) + " frames for '" + row.id +
                                         "' but the directory holds " + std::to_string(video->num_frames()));
    ds.num_classes = std::max(ds.num_classes, row.label + 1);
    ds.entries.push_back({std::move(video), row.split});
  }
  return ds;
}

}  // namespace vspp::data
