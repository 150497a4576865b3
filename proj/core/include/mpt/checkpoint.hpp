#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mpt/masking.hpp"
#include "mpt/model.hpp"
#include "mpt/tensor.hpp"

namespace mpt {

// Byte-level corruption in a serialized checkpoint; offset points at the
// byte where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& message, size_t at)
      : std::runtime_error(message + " (at byte " + std::to_string(at) + ")"), offset(at) {}
  size_t offset;
};

struct TensorBlob {
  Shape shape;
  std::vector<float> data;
};

// On-disk model state. Layout, all little-endian:
//   "MPT1" | u32 version | u32 tensor count
//   per tensor: u32 name length | name | u32 rank | u32 dims... | f32 data
//   u64 config length | config JSON (UTF-8)
// config_json is preserved verbatim through load/save, so a load/save pair
// is byte-identical.
struct Checkpoint {
  uint32_t version = 1;
  std::vector<std::pair<std::string, TensorBlob>> tensors;
  std::string config_json;
};

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& cp);
Checkpoint parse_checkpoint(const unsigned char* data, size_t size);

void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Everything the config blob records besides the weights.
struct CheckpointMeta {
  ModelConfig model;
  MaskConfig mask;
  LossConfig loss;
  uint64_t seed = 0;
  int64_t step = 0;
};

Checkpoint make_checkpoint(const MptModel<float>& model, const CheckpointMeta& meta);
CheckpointMeta meta_from_checkpoint(const Checkpoint& cp);

// Rebuilds the model from the recorded config and loads every tensor.
// Missing, extra, or reshaped tensors are errors.
MptModel<float> model_from_checkpoint(const Checkpoint& cp);

}  // namespace mpt
