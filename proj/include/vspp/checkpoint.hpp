// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format (little-endian):
//   "VSPPCKPT" u32 version
//   str stage | str config_yaml | u64 config_hash
//   encoder: str family, u32 n, i32 widths[n], i32 blocks, clip_len, height, width
//   i64 epoch, i64 step | str rng_state
//   3 x tensor table (parameters, buffers, optimizer): u32 count, then
//       str name, u32 rank, i64 dims[rank], f64 data[]
//   u8 has_bank [i32 capacity, dim, cursor, fill, f64 storage[capacity*dim]]
//   u64 FNV-1a of everything above
// Strings are u32 length + bytes.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vspp/distill.hpp"
#include "vspp/models.hpp"
#include "vspp/nn/optim.hpp"

namespace vspp::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

using TensorTable = std::vector<std::pair<std::string, Tensor>>;

struct BankState {
  int capacity = 0;
  int dim = 0;
  int cursor = 0;
  int fill = 0;
  Tensor storage;
};

struct Checkpoint {
  std::uint32_t version = kFormatVersion;
  std::string stage;  // "aux", "vspp" or "finetune"
  std::string config_yaml;
  std::uint64_t config_hash = 0;
  models::EncoderConfig encoder;
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  std::string rng_state;
  TensorTable parameters;
  TensorTable buffers;
  TensorTable optimizer;
  std::optional<BankState> bank;

  const Tensor* find_parameter(const std::string& name) const;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes);

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
/// CorruptCheckpoint on bad magic, version, truncation or checksum mismatch.
Checkpoint load(const std::filesystem::path& path);

TensorTable capture(const nn::ParamList& params);
TensorTable capture(const nn::BufferList& buffers);
TensorTable capture(const nn::Sgd& optimizer);
BankState capture(const distill::MemoryBank& bank);

/// Copies every table entry whose name starts with `prefix` into the matching
/// live tensor. ConfigMismatch when an expected entry is missing.
void restore(const TensorTable& table, const nn::ParamList& params, const std::string& prefix = "");
void restore(const TensorTable& table, const nn::BufferList& buffers, const std::string& prefix = "");
void restore(const TensorTable& table, nn::Sgd& optimizer);
void restore(const BankState& state, distill::MemoryBank& bank);

}  // namespace vspp::checkpoint
