#pragma once

#include <cstdint>
#include <string>

#include "mpt/dataset.hpp"
#include "mpt/masking.hpp"
#include "mpt/model.hpp"

namespace mpt {

// Linear probe / finetune settings (classifier training on frozen or
// unfrozen backbone features).
struct ProbeConfig {
  int epochs = 80;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double dropout = 0.1;
};

// Full experiment description. Serializes to a flat "key = value" file;
// parse/serialize round-trip exactly.
struct TrainConfig {
  ModelConfig model;
  MaskConfig mask;
  LossConfig loss;
  DatasetSpec data;
  ProbeConfig probe;

  int epochs = 0;       // used only when max_steps is 0
  int max_steps = 300;  // optimizer steps; 0 defers to epochs
  int batch_size = 16;
  double base_lr = 1e-3;
  double weight_decay = 0.05;
  int warmup_epochs = 1;
  uint64_t seed = 1;

  bool augment = true;
  double aug_scale_min = 0.8;
  double aug_scale_max = 1.2;
  double aug_translate = 0.1;

  std::string data_dir;  // empty: synthesize the dataset in memory

  void validate() const;
};

// Parses "key = value" lines; '#' starts a comment, blank lines are
// skipped. Unknown and duplicate keys are errors (ParseError with the
// offending line).
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);

// Emits every key in a fixed order with round-trip-exact numbers.
std::string serialize_train_config(const TrainConfig& cfg);

}  // namespace mpt
