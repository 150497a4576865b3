#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mpt/checkpoint.hpp"
#include "mpt/config.hpp"
#include "mpt/dataset.hpp"
#include "mpt/model.hpp"

namespace mpt {

// Progress sink for long-running loops; may be empty.
using LogFn = std::function<void(const std::string&)>;

// Builds the dataset a config describes: synthesized from the config seed,
// or loaded from data_dir (train/ and test/ subdirectories of .xyz files
// named *_class<K>.xyz) when set.
Dataset dataset_for(const TrainConfig& cfg);

// In-place Fisher-Yates with draws from rng.
void shuffle_indices(std::vector<int>& order, Rng& rng);

// Uniform scale then translation, drawn as {scale, tx, ty, tz}.
PointCloud augment_cloud(const PointCloud& cloud, const TrainConfig& cfg, Rng& rng);

struct TrainResult {
  Checkpoint init_checkpoint;  // weights before the first step, same metadata
  Checkpoint checkpoint;       // final weights
  std::string metrics_csv;     // header: step,lr,loss,acc_real,acc_fake
  double final_loss = 0.0;
  int total_steps = 0;
};

// The exact model run_pretrain starts from: init seed derives from cfg.seed.
MptModel<float> init_model(const TrainConfig& cfg);

// Full pretraining run. Deterministic given (cfg, ds): every random choice
// derives from cfg.seed. Aborts with a diagnostic (step, lr, grad norm) if
// the loss leaves the finite range.
TrainResult run_pretrain(const TrainConfig& cfg, const Dataset& ds, const LogFn& log = {});

struct QueryAccuracy {
  double acc_real = 0.0, acc_fake = 0.0, acc_mean = 0.0;
  long n_real = 0, n_fake = 0;
};

// Pooled real/fake discrimination accuracy over held-out clouds, eval mode.
// Cloud i's mask and queries derive from (eval_seed, i) only, so two models
// evaluated with the same seed see identical queries.
QueryAccuracy eval_query_accuracy(const MptModel<float>& model, const std::vector<LabeledCloud>& clouds,
                                  const MaskConfig& mask, const LossConfig& loss, uint64_t eval_seed);

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Classifier training on frozen cloud descriptors: the same MLP head as
// full finetuning, but the backbone parameters are never touched.
ProbeResult linear_probe(const MptModel<float>& model, const Dataset& ds, const ProbeConfig& pcfg, uint64_t seed);

// End-to-end finetune of backbone plus MLP head; returns held-out accuracy.
double finetune_classifier(MptModel<float>& model, const Dataset& ds, const ProbeConfig& pcfg, uint64_t seed,
                           const LogFn& log = {});

struct ReconstructionResult {
  double tau = 0.0;
  PointCloud accepted;        // probes with probability >= tau
  double chamfer = 0.0;       // accepted vs original cloud; +inf when accepted is empty
};

struct ProbeReconstruction {
  PointCloud probes;              // shared across thresholds
  std::vector<double> probs;      // occupancy probability per probe
  std::vector<ReconstructionResult> by_tau;
};

// Occupancy-probe reconstruction: mask the cloud, encode the visible part,
// score n_probes uniform box samples, and threshold at each tau. Probes and
// the mask derive from seed alone, so different checkpoints of the same
// config score identical probes.
ProbeReconstruction reconstruct_by_probing(const MptModel<float>& model, const PointCloud& cloud,
                                           const MaskConfig& mask, int n_probes, const std::vector<double>& taus,
                                           uint64_t seed);

struct AblationRow {
  std::string axis;
  std::string value;
  double query_accuracy = 0.0;
  double probe_accuracy = 0.0;
};

// Axes: mask_ratio, mask_mode, n_queries, dec_layers. Each value runs a
// full pretrain plus linear probe at the base config's seed.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::string& axis,
                                      const std::vector<std::string>& values, const LogFn& log = {});

std::vector<std::pair<std::string, std::vector<std::string>>> default_ablation_axes();

// Full-scale reference trend for an axis, for informational printing next
// to desk-scale results.
std::string ablation_reference_note(const std::string& axis);

// header: axis,value,query_accuracy,probe_accuracy
std::string ablation_csv(const std::vector<AblationRow>& rows);

// Reproduction record: resolved config, seed, start time, artifact paths.
std::string manifest_text(const TrainConfig& cfg, const std::string& start_time,
                          const std::vector<std::string>& artifacts);

}  // namespace mpt
