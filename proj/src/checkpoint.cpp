// SPDX-License-Identifier: Apache-2.0
#include "vspp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "vspp/error.hpp"
#include "vspp/rng.hpp"

namespace vspp::checkpoint {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'P', 'P', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <class T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void table(const TensorTable& t) {
    pod(static_cast<std::uint32_t>(t.size()));
    for (const auto& [name, tensor] : t) {
      str(name);
      pod(static_cast<std::uint32_t>(tensor.rank()));
      for (auto d : tensor.shape) pod(static_cast<std::int64_t>(d));
      raw(tensor.ptr(), tensor.size() * sizeof(Scalar));
    }
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  TensorTable table() {
    TensorTable t;
    const auto count = pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = str();
      const auto rank = pod<std::uint32_t>();
      if (rank > 8) throw Error(Errc::CorruptCheckpoint, "tensor '" + name + "' has implausible rank");
      Shape shape;
      for (std::uint32_t r = 0; r < rank; ++r) {
        const auto d = pod<std::int64_t>();
        if (d < 0 || d > (1LL << 32)) throw Error(Errc::CorruptCheckpoint, "tensor '" + name + "' has bad extent");
        shape.push_back(d);
      }
      need(Tensor::count(shape) * sizeof(Scalar));
      Tensor tensor(shape);
      raw(tensor.ptr(), tensor.size() * sizeof(Scalar));
      t.emplace_back(std::move(name), std::move(tensor));
    }
    return t;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw Error(Errc::CorruptCheckpoint, "truncated checkpoint");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find_parameter(const std::string& name) const {
  for (const auto& [n, t] : parameters)
    if (n == name) return &t;
  return nullptr;
}

std::string serialize(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod(c.version);
  w.str(c.stage);
  w.str(c.config_yaml);
  w.pod(c.config_hash);
  w.str(models::to_string(c.encoder.family));
  w.pod(static_cast<std::uint32_t>(c.encoder.stage_widths.size()));
  for (int width : c.encoder.stage_widths) w.pod(static_cast<std::int32_t>(width));
  w.pod(static_cast<std::int32_t>(c.encoder.blocks_per_stage));
  w.pod(static_cast<std::int32_t>(c.encoder.clip_len));
  w.pod(static_cast<std::int32_t>(c.encoder.height));
  w.pod(static_cast<std::int32_t>(c.encoder.width));
  w.pod(c.epoch);
  w.pod(c.step);
  w.str(c.rng_state);
  w.table(c.parameters);
  w.table(c.buffers);
  w.table(c.optimizer);
  w.pod(static_cast<std::uint8_t>(c.bank ? 1 : 0));
  if (c.bank) {
    w.pod(static_cast<std::int32_t>(c.bank->capacity));
    w.pod(static_cast<std::int32_t>(c.bank->dim));
    w.pod(static_cast<std::int32_t>(c.bank->cursor));
    w.pod(static_cast<std::int32_t>(c.bank->fill));
    if (c.bank->storage.size() != static_cast<std::size_t>(c.bank->capacity) * c.bank->dim)
      throw Error(Errc::ShapeMismatch, "bank storage does not match capacity x dim");
    w.raw(c.bank->storage.ptr(), c.bank->storage.size() * sizeof(Scalar));
  }
  const std::uint64_t sum = fnv1a(w.bytes());
  w.pod(sum);
  return std::move(w.bytes());
}

Checkpoint deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + sizeof(std::uint64_t) || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw Error(Errc::CorruptCheckpoint, "not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (fnv1a(std::string_view(bytes.data(), body)) != stored) throw Error(Errc::CorruptCheckpoint, "checksum mismatch");

  Reader r(bytes, body);
  char magic[sizeof kMagic];
  r.raw(magic, sizeof magic);
  Checkpoint c;
  c.version = r.pod<std::uint32_t>();
  if (c.version != kFormatVersion)
    throw Error(Errc::CorruptCheckpoint, "unsupported checkpoint version " + std::to_string(c.version));
  c.stage = r.str();
  c.config_yaml = r.str();
  c.config_hash = r.pod<std::uint64_t>();
  try {
    c.encoder.family = models::parse_family(r.str());
  } catch (const Error&) {
    throw Error(Errc::CorruptCheckpoint, "unknown encoder family");
  }
  const auto n = r.pod<std::uint32_t>();
  if (n > 64) throw Error(Errc::CorruptCheckpoint, "implausible stage count");
  c.encoder.stage_widths.clear();
  for (std::uint32_t i = 0; i < n; ++i) c.encoder.stage_widths.push_back(r.pod<std::int32_t>());
  c.encoder.blocks_per_stage = r.pod<std::int32_t>();
  c.encoder.clip_len = r.pod<std::int32_t>();
  c.encoder.height = r.pod<std::int32_t>();
  c.encoder.width = r.pod<std::int32_t>();
  c.epoch = r.pod<std::int64_t>();
  c.step = r.pod<std::int64_t>();
  c.rng_state = r.str();
  c.parameters = r.table();
  c.buffers = r.table();
  c.optimizer = r.table();
  if (r.pod<std::uint8_t>()) {
    BankState b;
    b.capacity = r.pod<std::int32_t>();
    b.dim = r.pod<std::int32_t>();
    b.cursor = r.pod<std::int32_t>();
    b.fill = r.pod<std::int32_t>();
    if (b.capacity < 1 || b.dim < 1 || b.capacity > (1 << 24) || b.dim > (1 << 16))
      throw Error(Errc::CorruptCheckpoint, "implausible bank shape");
    b.storage = Tensor({b.capacity, b.dim});
    r.raw(b.storage.ptr(), b.storage.size() * sizeof(Scalar));
    c.bank = std::move(b);
  }
  if (r.position() != body) throw Error(Errc::CorruptCheckpoint, "trailing bytes after checkpoint body");
  return c;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

TensorTable capture(const nn::ParamList& params) {
  TensorTable t;
  for (const auto& p : params) t.emplace_back(p.name, p.param->value);
  return t;
}

TensorTable capture(const nn::BufferList& buffers) {
  TensorTable t;
  for (const auto& b : buffers) t.emplace_back(b.name, *b.tensor);
  return t;
}

TensorTable capture(const nn::Sgd& optimizer) {
  TensorTable t;
  for (const auto& [name, v] : optimizer.state()) t.emplace_back(name, v);
  return t;
}

BankState capture(const distill::MemoryBank& bank) {
  return BankState{bank.capacity(), bank.dim(), bank.cursor(), bank.fill(), bank.storage()};
}

namespace {

template <class List, class Get>
void restore_into(const TensorTable& table, const List& live, const std::string& prefix, Get get) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : table) by_name[name] = &t;
  for (const auto& entry : live) {
    if (!entry.name.starts_with(prefix)) continue;
    auto it = by_name.find(entry.name);
    if (it == by_name.end()) throw Error(Errc::ConfigMismatch, "checkpoint lacks '" + entry.name + "'");
    Tensor* dst = get(entry);
    if (it->second->shape != dst->shape)
      throw Error(Errc::ConfigMismatch, "'" + entry.name + "' is " + shape_string(it->second->shape) +
                                            " in the checkpoint but " + shape_string(dst->shape) + " in the model");
    dst->data = it->second->data;
  }
}

}  // namespace

void restore(const TensorTable& table, const nn::ParamList& params, const std::string& prefix) {
  restore_into(table, params, prefix, [](const nn::NamedParam& p) { return &p.param->value; });
}

void restore(const TensorTable& table, const nn::BufferList& buffers, const std::string& prefix) {
  restore_into(table, buffers, prefix, [](const nn::NamedBuffer& b) { return b.tensor; });
}

void restore(const TensorTable& table, nn::Sgd& optimizer) {
  optimizer.state().clear();
  for (const auto& [name, t] : table) optimizer.state().emplace(name, t);
}

void restore(const BankState& state, distill::MemoryBank& bank) {
  if (state.capacity != bank.capacity() || state.dim != bank.dim())
    throw Error(Errc::ConfigMismatch, "checkpoint bank is " + std::to_string(state.capacity) + "x" +
                                          std::to_string(state.dim) + ", configured " + std::to_string(bank.capacity()) +
                                          "x" + std::to_string(bank.dim()));
  bank.restore(state.storage, state.cursor, state.fill);
}

}  // namespace vspp::checkpoint
