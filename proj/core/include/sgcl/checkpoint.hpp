#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgcl/encoder.hpp"
#include "sgcl/text.hpp"
#include "sgcl/trainer.hpp"

namespace sgcl {

/// Persisted training result: the tuned encoder parameters, the vocabulary
/// and the config snapshot. The fixed encoder and the projection head are
/// deliberately not stored; inference needs neither.
///
/// On-disk layout (all integers little-endian):
///   magic "SGE1", u32 version,
///   u32 header length, header text (key=value lines incl. the vocab),
///   u32 tensor count,
///   per tensor: u32 name length, name, u32 rank, u64 extents,
///               values as raw little-endian 64-bit reals,
///   u32 CRC-32 of every preceding byte.
struct Checkpoint {
  std::uint32_t version = 1;
  EncoderConfig config;
  std::vector<NamedParam> tuned;
  Vocab vocab;
  TrainConfig train_config;
  double best_metric = 0.0;
};

Checkpoint make_checkpoint(const EncoderParams& tuned, const Vocab& vocab,
                           const TrainConfig& train_config, double best_metric);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

/// Throws on bad magic, unsupported version, truncation or CRC mismatch.
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds encoder parameters (role "tuned") from the stored tensors.
EncoderParams params_from_checkpoint(const Checkpoint& checkpoint);

/// Verifies the stored tensor layout against the one `expected` would
/// produce; throws naming the first differing tensor.
void check_layout(const Checkpoint& checkpoint, const EncoderConfig& expected);

std::uint32_t crc32(std::span<const unsigned char> bytes);

}  // namespace sgcl
