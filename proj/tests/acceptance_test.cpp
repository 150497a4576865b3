// Acceptance suite. Each criterion prints exactly one [PASS]/[FAIL] line
// with the measured value next to its pinned bound; the process exits
// nonzero if any selected criterion fails.
//
// usage: acceptance_test [N]   (N in 1..9; no argument runs all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mpt/checkpoint.hpp"
#include "mpt/config.hpp"
#include "mpt/gradcheck.hpp"
#include "mpt/io.hpp"
#include "mpt/train.hpp"

using namespace mpt;

namespace {

// ---------------------------------------------------------------------------
// pinned bounds

constexpr int kOracleClouds = 120;             // >= 100 random clouds
constexpr int kOracleMaxPoints = 64;           // N <= 64
constexpr double kOracleBudgetSec = 10.0;      // runtime < 10 s
constexpr double kOpGradTol = 1e-6;            // per-op max relative error
constexpr double kModelGradTol = 1e-4;         // composed graph
constexpr int kModelGradCoords = 200;          // >= 200 parameter coordinates
constexpr double kGradBudgetSec = 120.0;       // runtime < 2 min
constexpr double kDiscrimTarget = 0.85;        // trained mean(acc_real, acc_fake)
constexpr double kDiscrimInitLo = 0.45;        // 0.50 +- 0.05 at initialization
constexpr double kDiscrimInitHi = 0.55;
constexpr double kDiscrimBudgetSec = 300.0;    // runtime < 5 min
constexpr double kTransferDelta = 0.10;        // pretrained - random >= 10 points
constexpr double kTransferFloor = 0.80;        // pretrained probe >= 0.80
constexpr double kTransferBudgetSec = 600.0;   // runtime < 10 min
constexpr double kReconHalving = 0.5;          // trained CD <= 0.5x untrained CD
constexpr int kReconClouds = 8;                // held-out clouds averaged
constexpr int kReconProbes = 2048;
constexpr int kIndependenceTrials = 100;       // exact equality trials
constexpr double kFocalBceTol = 1e-10;         // gamma 0, alpha 0.5 vs 0.5*BCE
constexpr double kFocalHandTol = 1e-8;         // value at p=0.9, y=1
constexpr double kFocalHandValue = 2.634e-4;
constexpr int kSeeds[3] = {1, 2, 3};

// ---------------------------------------------------------------------------
// experiment recipes
//
// The desk recipe trains the small discrimination model: 512x256 synthetic
// clouds, 16 patches of 32 points, dim 64, 3 encoder layers, 1 decoder
// layer, 0.9 random masking, 64 queries, 300 steps. Dropout and droppath
// are disabled: at a 300-step budget regularization starves learning.
// gamma_fps_count 20 keeps the occupancy margin coarse enough to learn
// quickly from 2 visible patches.
TrainConfig desk_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.model.dropout_p = 0.0;
  cfg.model.droppath_p = 0.0;
  cfg.mask.gamma_fps_count = 20;
  cfg.data.jitter = 0.03;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

// The transfer recipe trains the encoder whose features feed the linear
// probe: same backbone, but a finer occupancy margin (gamma at fps 48), a
// 0.5 mask so the encoder sees more context, more queries, and 1000 steps.
// The desk recipe's coarse-margin task can be solved with little shape
// understanding; this one cannot.
TrainConfig transfer_config(uint64_t seed) {
  TrainConfig cfg = desk_config(seed);
  cfg.mask.gamma_fps_count = 48;
  cfg.mask.ratio = 0.5;
  cfg.mask.n_queries = 96;
  cfg.max_steps = 1000;
  cfg.warmup_epochs = 2;
  cfg.probe.dropout = 0.3;
  return cfg;
}

// Reduced-scale base for the ablation sweep: same model, smaller data and
// step budget so 12 pretrains finish in minutes.
TrainConfig ablate_config(uint64_t seed) {
  TrainConfig cfg = desk_config(seed);
  cfg.data.n_train = 128;
  cfg.data.n_test = 64;
  cfg.max_steps = 60;
  cfg.probe.epochs = 30;
  return cfg;
}

// ---------------------------------------------------------------------------
// plumbing

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CriterionResult {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// Desk pretrains are shared between criteria 3 and 5 within one process.
struct DeskRun {
  Dataset ds;
  TrainResult result;
};

const DeskRun& desk_run(uint64_t seed) {
  static std::map<uint64_t, DeskRun> cache;
  auto it = cache.find(seed);
  if (it == cache.end()) {
    TrainConfig cfg = desk_config(seed);
    DeskRun run{dataset_for(cfg), {}};
    run.result = run_pretrain(cfg, run.ds);
    it = cache.emplace(seed, std::move(run)).first;
  }
  return it->second;
}

PointCloud random_box_cloud(int n, Rng& rng) {
  PointCloud c;
  c.reserve(size_t(n));
  for (int i = 0; i < n; ++i) c.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  return c;
}

// ---------------------------------------------------------------------------
// criterion 1: geometry kernels vs brute-force oracles

std::vector<int> fps_oracle(const PointCloud& cloud, int count, int start) {
  std::vector<int> picked{start};
  std::vector<double> best(cloud.size(), std::numeric_limits<double>::infinity());
  while (int(picked.size()) < count) {
    const Point3& last = cloud[size_t(picked.back())];
    int arg = -1;
    double far = -1.0;
    for (size_t i = 0; i < cloud.size(); ++i) {
      best[i] = std::min(best[i], dist2(cloud[i], last));
      if (best[i] > far) {
        far = best[i];
        arg = int(i);
      }
    }
    picked.push_back(arg);
  }
  return picked;
}

std::vector<int> knn_oracle(const PointCloud& cloud, const Point3& center, int k) {
  std::vector<int> idx(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) idx[i] = int(i);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double da = dist2(cloud[size_t(a)], center), db = dist2(cloud[size_t(b)], center);
    if (da != db) return da < db;
    return a < b;
  });
  idx.resize(size_t(k));
  return idx;
}

double min_pairwise_oracle(const PointCloud& cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < cloud.size(); ++i)
    for (size_t j = i + 1; j < cloud.size(); ++j) best = std::min(best, dist(cloud[i], cloud[j]));
  return best;
}

CriterionResult criterion_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(0xACC1);
  int mismatches = 0;
  for (int c = 0; c < kOracleClouds; ++c) {
    const int n = 8 + int(rng.below(uint64_t(kOracleMaxPoints - 8 + 1)));
    auto cloud = random_box_cloud(n, rng);

    const int count = 2 + int(rng.below(uint64_t(n - 1)));
    const int start = int(rng.below(uint64_t(n)));
    if (fps(cloud, count, start) != fps_oracle(cloud, count, start)) ++mismatches;

    const int k = 1 + int(rng.below(uint64_t(n)));
    const Point3 center = cloud[rng.below(cloud.size())];
    if (knn(cloud, center, k) != knn_oracle(cloud, center, k)) ++mismatches;

    if (std::abs(min_pairwise_distance(cloud) - min_pairwise_oracle(cloud)) != 0.0) ++mismatches;

    // gamma-discard predicate against a direct distance scan.
    const double gamma = compute_gamma(cloud, std::min(n, 8));
    for (int q = 0; q < 8; ++q) {
      const Point3 p{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
      double dmin = std::numeric_limits<double>::infinity();
      for (const auto& cp : cloud) dmin = std::min(dmin, dist(p, cp));
      if (query_too_close(p, cloud, gamma) != (dmin < gamma)) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  CriterionResult r;
  r.pass = mismatches == 0 && secs < kOracleBudgetSec;
  r.detail = std::to_string(mismatches) + " mismatches over " + std::to_string(kOracleClouds) +
             " clouds vs 0, " + fmt(secs) + "s vs <" + fmt(kOracleBudgetSec) + "s";
  return r;
}

// ---------------------------------------------------------------------------
// criterion 2: gradient fidelity

CriterionResult criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_op = 0.0;
  std::string worst_name = "none";
  for (const GradCheckResult& g : run_op_gradchecks()) {
    if (g.max_rel_err > worst_op) {
      worst_op = g.max_rel_err;
      worst_name = g.name;
    }
  }
  const GradCheckResult m = run_model_gradcheck(kModelGradCoords);
  const double secs = seconds_since(t0);
  CriterionResult r;
  r.pass = worst_op < kOpGradTol && m.max_rel_err < kModelGradTol && m.coords_checked >= kModelGradCoords &&
           secs < kGradBudgetSec;
  r.detail = "op max " + fmt(worst_op) + " (" + worst_name + ") vs <" + fmt(kOpGradTol) + ", composed " +
             fmt(m.max_rel_err) + " over " + std::to_string(m.coords_checked) + " coords vs <" +
             fmt(kModelGradTol) + ", " + fmt(secs) + "s vs <" + fmt(kGradBudgetSec) + "s";
  return r;
}

// ---------------------------------------------------------------------------
// criterion 3: discrimination learning at the desk recipe

CriterionResult criterion_discrimination() {
  const auto t0 = std::chrono::steady_clock::now();
  double trained_sum = 0.0, init_sum = 0.0;
  for (int seed : kSeeds) {
    const TrainConfig cfg = desk_config(uint64_t(seed));
    const DeskRun& run = desk_run(uint64_t(seed));
    auto trained = model_from_checkpoint(run.result.checkpoint);
    auto init = model_from_checkpoint(run.result.init_checkpoint);
    trained_sum += eval_query_accuracy(trained, run.ds.test, cfg.mask, cfg.loss, 999).acc_mean;
    init_sum += eval_query_accuracy(init, run.ds.test, cfg.mask, cfg.loss, 999).acc_mean;
  }
  const double trained_mean = trained_sum / 3.0;
  const double init_mean = init_sum / 3.0;
  const double secs = seconds_since(t0);
  CriterionResult r;
  r.pass = trained_mean >= kDiscrimTarget && init_mean >= kDiscrimInitLo && init_mean <= kDiscrimInitHi &&
           secs < kDiscrimBudgetSec;
  r.detail = "3-seed mean " + fmt(trained_mean) + " vs >=" + fmt(kDiscrimTarget) + ", init " + fmt(init_mean) +
             " vs [" + fmt(kDiscrimInitLo) + "," + fmt(kDiscrimInitHi) + "], " + fmt(secs) + "s vs <" +
             fmt(kDiscrimBudgetSec) + "s";
  return r;
}

// ---------------------------------------------------------------------------
// criterion 4: linear-probe transfer from the pretrained encoder

CriterionResult criterion_transfer() {
  const auto t0 = std::chrono::steady_clock::now();
  double pre_sum = 0.0, rand_sum = 0.0;
  for (int seed : kSeeds) {
    const TrainConfig cfg = transfer_config(uint64_t(seed));
    const Dataset ds = dataset_for(cfg);
    auto tr = run_pretrain(cfg, ds);
    auto pretrained = model_from_checkpoint(tr.checkpoint);
    auto random_init = init_model(cfg);
    pre_sum += linear_probe(pretrained, ds, cfg.probe, cfg.seed).test_accuracy;
    rand_sum += linear_probe(random_init, ds, cfg.probe, cfg.seed).test_accuracy;
  }
  const double pre = pre_sum / 3.0, rnd = rand_sum / 3.0;
  const double secs = seconds_since(t0);
  CriterionResult r;
  r.pass = (pre - rnd) >= kTransferDelta && pre >= kTransferFloor && secs < kTransferBudgetSec;
  r.detail = "3-seed probe " + fmt(pre) + " vs random " + fmt(rnd) + " (delta " + fmt(pre - rnd) + " vs >=" +
             fmt(kTransferDelta) + ", floor " + fmt(kTransferFloor) + "), " + fmt(secs) + "s vs <" +
             fmt(kTransferBudgetSec) + "s";
  return r;
}

// ---------------------------------------------------------------------------
// criterion 5: occupancy reconstruction halves the untrained chamfer

CriterionResult criterion_reconstruction() {
  const TrainConfig cfg = desk_config(1);
  const DeskRun& run = desk_run(1);
  auto trained = model_from_checkpoint(run.result.checkpoint);
  auto untrained = model_from_checkpoint(run.result.init_checkpoint);

  std::vector<double> taus;
  for (int i = 1; i <= 19; ++i) taus.push_back(0.05 * i);

  MaskConfig mask = cfg.mask;
  mask.ratio = 0.9;

  bool monotone = true;
  auto best_cd = [&](const MptModel<float>& model, const PointCloud& cloud, uint64_t seed) {
    auto rec = reconstruct_by_probing(model, cloud, mask, kReconProbes, taus, seed);
    // Exact subset property: each threshold keeps precisely the probes whose
    // probability clears it, so higher taus keep subsets of lower taus.
    for (size_t t = 0; t < taus.size(); ++t) {
      size_t want = 0;
      for (size_t i = 0; i < rec.probs.size(); ++i) {
        if (rec.probs[i] >= taus[t]) {
          if (want >= rec.by_tau[t].accepted.size() ||
              rec.by_tau[t].accepted[want].x != rec.probes[i].x ||
              rec.by_tau[t].accepted[want].y != rec.probes[i].y ||
              rec.by_tau[t].accepted[want].z != rec.probes[i].z) {
            monotone = false;
            break;
          }
          ++want;
        }
      }
      if (want != rec.by_tau[t].accepted.size()) monotone = false;
      if (t > 0 && rec.by_tau[t].accepted.size() > rec.by_tau[t - 1].accepted.size()) monotone = false;
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rr : rec.by_tau) best = std::min(best, rr.chamfer);
    return best;
  };

  double trained_sum = 0.0, untrained_sum = 0.0;
  for (int i = 0; i < kReconClouds; ++i) {
    const PointCloud& cloud = run.ds.test[size_t(i)].cloud;
    const uint64_t seed = derive_seed(0x5EC0, uint64_t(i));
    trained_sum += best_cd(trained, cloud, seed);
    untrained_sum += best_cd(untrained, cloud, seed);
  }
  const double trained_mean = trained_sum / kReconClouds;
  const double untrained_mean = untrained_sum / kReconClouds;
  const double ratio = trained_mean / untrained_mean;
  CriterionResult r;
  r.pass = monotone && ratio <= kReconHalving;
  r.detail = "best-tau CD " + fmt(trained_mean) + " vs untrained " + fmt(untrained_mean) + " (ratio " + fmt(ratio) +
             " vs <=" + fmt(kReconHalving) + "), tau subsets " + (monotone ? "exact" : "VIOLATED");
  return r;
}

// ---------------------------------------------------------------------------
// criterion 6: decoder scores queries independently

CriterionResult criterion_independence() {
  ModelConfig mc;
  mc.dim = 32;
  mc.n_heads = 4;
  mc.n_enc_layers = 2;
  mc.n_dec_layers = 1;
  mc.patch_count = 8;
  mc.patch_size = 16;
  mc.dropout_p = 0.0;
  mc.droppath_p = 0.0;

  Rng rng(0x1DE9);
  int failures = 0;
  for (int trial = 0; trial < kIndependenceTrials; ++trial) {
    MptModel<float> model(mc, 100 + trial % 5);
    Rng cloud_rng(derive_seed(0xC1D, uint64_t(trial)));
    auto cloud = gen_shape(ShapeKind(trial % 4), 128, 0.02, cloud_rng);
    auto ps = patchify(cloud, mc.patch_count, mc.patch_size);
    Rng eval_rng(1);
    auto enc = model.encode(model.embed_groups(ps.groups), model.pos_embed_points(ps.centers), false, eval_rng);

    const int nq = 4 + int(rng.below(29));
    auto queries = random_box_cloud(nq, rng);
    auto full = model.decode_logits(enc, queries, false, eval_rng);

    // Remove a random nonempty strict subset, keep order of the survivors.
    PointCloud kept;
    std::vector<int> kept_idx;
    for (int i = 0; i < nq; ++i)
      if (rng.below(3) != 0) {
        kept.push_back(queries[size_t(i)]);
        kept_idx.push_back(i);
      }
    if (kept.empty()) {
      kept.push_back(queries[0]);
      kept_idx.push_back(0);
    }
    auto sub = model.decode_logits(enc, kept, false, eval_rng);
    for (size_t i = 0; i < kept_idx.size(); ++i)
      if (sub.value()[i] != full.value()[size_t(kept_idx[i])]) {
        ++failures;
        break;
      }
  }
  CriterionResult r;
  r.pass = failures == 0;
  r.detail = std::to_string(failures) + " of " + std::to_string(kIndependenceTrials) +
             " trials differed vs 0 (bit-exact)";
  return r;
}

// ---------------------------------------------------------------------------
// criterion 7: focal loss closed-form checks

CriterionResult criterion_focal() {
  Rng rng(0xF0CA);
  double worst_bce = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double z = rng.uniform(-6.0, 6.0);
    const int y = int(rng.below(2));
    auto t = Tensor<double>::from({1, 1}, {z});
    const double f = focal_loss_mean(t, {y}, 0.5, 0.0).value()[0];
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double bce = y ? -std::log(p) : -std::log(1.0 - p);
    worst_bce = std::max(worst_bce, std::abs(f - 0.5 * bce));
  }

  const double z9 = std::log(9.0);  // sigmoid(z9) = 0.9
  auto t9 = Tensor<double>::from({1, 1}, {z9});
  const double hand = focal_loss_mean(t9, {1}, 0.25, 2.0).value()[0];
  const double hand_err = std::abs(hand - kFocalHandValue);

  CriterionResult r;
  r.pass = worst_bce < kFocalBceTol && hand_err < kFocalHandTol;
  r.detail = "0.5xBCE max err " + fmt(worst_bce) + " vs <" + fmt(kFocalBceTol) + ", hand value err " +
             fmt(hand_err) + " vs <" + fmt(kFocalHandTol);
  return r;
}

// ---------------------------------------------------------------------------
// criterion 8: determinism and serialization round-trips

CriterionResult criterion_determinism() {
  TrainConfig cfg;
  cfg.model.dim = 32;
  cfg.model.n_heads = 4;
  cfg.model.n_enc_layers = 2;
  cfg.model.patch_count = 8;
  cfg.model.patch_size = 16;
  cfg.data.n_train = 32;
  cfg.data.n_test = 16;
  cfg.data.n_points = 128;
  cfg.mask.n_queries = 32;
  cfg.max_steps = 30;
  cfg.batch_size = 8;
  cfg.seed = 7;
  cfg.validate();

  const Dataset ds = dataset_for(cfg);
  auto a = run_pretrain(cfg, ds);
  auto b = run_pretrain(cfg, ds);
  const bool metrics_same = a.metrics_csv == b.metrics_csv;
  const auto bytes_a = serialize_checkpoint(a.checkpoint);
  const bool ckpt_same = bytes_a == serialize_checkpoint(b.checkpoint) &&
                         serialize_checkpoint(a.init_checkpoint) == serialize_checkpoint(b.init_checkpoint);
  const bool roundtrip = serialize_checkpoint(parse_checkpoint(bytes_a.data(), bytes_a.size())) == bytes_a;

  // Cloud file fixtures round-trip through every supported format.
  Rng rng(3);
  auto cloud = gen_shape(ShapeKind::cylinder, 64, 0.01, rng);
  bool files_ok = true;
  {
    auto back = parse_xyz(write_xyz(cloud));
    files_ok = files_ok && back.size() == cloud.size();
    for (size_t i = 0; i < cloud.size() && files_ok; ++i)
      files_ok = std::abs(back[i].x - cloud[i].x) < 1e-8 && std::abs(back[i].y - cloud[i].y) < 1e-8 &&
                 std::abs(back[i].z - cloud[i].z) < 1e-8;
    const auto ply = write_ply_ascii(cloud);
    files_ok = files_ok && write_ply_ascii(parse_ply_ascii(ply)) == ply;
    std::string off = "OFF\n" + std::to_string(cloud.size()) + " 0 0\n";
    for (const auto& p : cloud)
      off += std::to_string(p.x) + " " + std::to_string(p.y) + " " + std::to_string(p.z) + "\n";
    files_ok = files_ok && parse_off(off).size() == cloud.size();
  }

  CriterionResult r;
  r.pass = metrics_same && ckpt_same && roundtrip && files_ok;
  r.detail = std::string("metrics ") + (metrics_same ? "identical" : "DIFFER") + ", checkpoints " +
             (ckpt_same ? "identical" : "DIFFER") + ", round-trip " + (roundtrip ? "byte-exact" : "DIFFER") +
             ", cloud files " + (files_ok ? "ok" : "FAILED");
  return r;
}

// ---------------------------------------------------------------------------
// criterion 9: ablation harness end to end at reduced scale

CriterionResult criterion_ablation() {
  const TrainConfig base = ablate_config(1);
  std::vector<AblationRow> all_rows;
  bool complete = true;
  for (const auto& [axis, values] : default_ablation_axes()) {
    auto rows = run_ablation(base, axis, values);
    complete = complete && rows.size() == values.size();
    for (const auto& row : rows) {
      complete = complete && std::isfinite(row.query_accuracy) && std::isfinite(row.probe_accuracy) &&
                 row.probe_accuracy >= 0.0 && row.probe_accuracy <= 1.0;
      all_rows.push_back(row);
    }
  }

  // Determinism: replaying one axis reproduces its rows exactly.
  auto again = run_ablation(base, "mask_ratio", {"0.25", "0.5", "0.75", "0.9"});
  bool deterministic = again.size() == 4;
  for (size_t i = 0; i < again.size() && deterministic; ++i)
    deterministic = again[i].query_accuracy == all_rows[i].query_accuracy &&
                    again[i].probe_accuracy == all_rows[i].probe_accuracy;

  // Trend direction is informational only at this scale.
  std::string trend = "probe(0.25)=" + fmt(all_rows[0].probe_accuracy) +
                      " probe(0.9)=" + fmt(all_rows[3].probe_accuracy) +
                      (all_rows[3].probe_accuracy >= all_rows[0].probe_accuracy ? " (matches" : " (differs from") +
                      " full-scale direction 83.2->84.6)";

  CriterionResult r;
  r.pass = complete && deterministic;
  r.detail = std::to_string(all_rows.size()) + " rows vs 12, completion " + (complete ? "ok" : "FAILED") +
             ", determinism " + (deterministic ? "ok" : "FAILED") + "; " + trend;
  return r;
}

// ---------------------------------------------------------------------------

struct Criterion {
  int number;
  const char* name;
  CriterionResult (*run)();
};

const Criterion kCriteria[] = {
    {1, "geometry kernels match brute-force oracles", criterion_oracles},
    {2, "gradient fidelity", criterion_gradients},
    {3, "discrimination learning", criterion_discrimination},
    {4, "linear-probe transfer", criterion_transfer},
    {5, "occupancy reconstruction", criterion_reconstruction},
    {6, "decoder query independence", criterion_independence},
    {7, "focal loss closed forms", criterion_focal},
    {8, "determinism and serialization", criterion_determinism},
    {9, "ablation harness", criterion_ablation},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc > 1) {
    only = std::atoi(argv[1]);
    if (only < 1 || only > 9) {
      std::fprintf(stderr, "usage: %s [criterion 1..9]\n", argv[0]);
      return 2;
    }
  }

  bool all_pass = true;
  for (const Criterion& c : kCriteria) {
    if (only != 0 && c.number != only) continue;
    CriterionResult res;
    try {
      res = c.run();
    } catch (const std::exception& e) {
      res.pass = false;
      res.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s (%s)\n", res.pass ? "PASS" : "FAIL", c.number, c.name, res.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && res.pass;
  }
  return all_pass ? 0 : 1;
}
