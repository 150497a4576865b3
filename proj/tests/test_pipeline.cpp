#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "mpt/checkpoint.hpp"
#include "mpt/config.hpp"
#include "mpt/train.hpp"

using namespace mpt;

namespace {

// Small enough that every pipeline entry point runs in well under a second.
TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.model.dim = 16;
  cfg.model.n_heads = 2;
  cfg.model.n_enc_layers = 2;
  cfg.model.n_dec_layers = 1;
  cfg.model.patch_count = 8;
  cfg.model.patch_size = 8;
  cfg.model.head_hidden = 16;
  cfg.model.dropout_p = 0.0;
  cfg.model.droppath_p = 0.0;
  cfg.mask.ratio = 0.75;
  cfg.mask.n_queries = 8;
  cfg.data.n_train = 8;
  cfg.data.n_test = 8;
  cfg.data.n_points = 64;
  cfg.max_steps = 2;
  cfg.batch_size = 4;
  cfg.warmup_epochs = 0;
  cfg.probe.epochs = 3;
  cfg.probe.batch_size = 8;
  cfg.probe.dropout = 0.0;
  cfg.seed = 11;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("dataset_for synthesizes the configured splits") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  CHECK(int(ds.train.size()) == cfg.data.n_train);
  CHECK(int(ds.test.size()) == cfg.data.n_test);
  CHECK(int(ds.train[0].cloud.size()) == cfg.data.n_points);
}

TEST_CASE("augment_cloud stays within the configured envelope") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  Rng rng(5);
  const auto& base = ds.train[0].cloud;
  auto aug = augment_cloud(base, cfg, rng);
  REQUIRE(aug.size() == base.size());
  // Uniform scale + translation: ratios of pairwise distances are preserved.
  const double d0 = dist(base[0], base[1]);
  const double d1 = dist(aug[0], aug[1]);
  const double s = d1 / d0;
  CHECK(s >= cfg.aug_scale_min - 1e-9);
  CHECK(s <= cfg.aug_scale_max + 1e-9);
  const double d2 = dist(base[2], base[3]);
  CHECK(dist(aug[2], aug[3]) == doctest::Approx(s * d2).epsilon(1e-6));
}

TEST_CASE("pretrain emits the exact csv header and one row per step") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  auto res = run_pretrain(cfg, ds);
  CHECK(res.total_steps == cfg.max_steps);
  REQUIRE(res.metrics_csv.rfind("step,lr,loss,acc_real,acc_fake\n", 0) == 0);
  const long rows = std::count(res.metrics_csv.begin(), res.metrics_csv.end(), '\n');
  CHECK(rows == cfg.max_steps + 1);
  CHECK(std::isfinite(res.final_loss));
}

TEST_CASE("same-seed pretrains are byte-identical, different seeds differ") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  auto a = run_pretrain(cfg, ds);
  auto b = run_pretrain(cfg, ds);
  CHECK(a.metrics_csv == b.metrics_csv);
  CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
  CHECK(serialize_checkpoint(a.init_checkpoint) == serialize_checkpoint(b.init_checkpoint));

  auto cfg2 = cfg;
  cfg2.seed = 12;
  auto ds2 = dataset_for(cfg2);
  auto c = run_pretrain(cfg2, ds2);
  CHECK(a.metrics_csv != c.metrics_csv);
}

TEST_CASE("the final checkpoint reloads into the trained model") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  auto res = run_pretrain(cfg, ds);
  auto model = model_from_checkpoint(res.checkpoint);
  auto meta = meta_from_checkpoint(res.checkpoint);
  CHECK(meta.step == cfg.max_steps);
  CHECK(meta.seed == cfg.seed);
  CHECK(meta.model.dim == cfg.model.dim);
  // Init checkpoint holds the pre-step weights: same config, step 0.
  auto meta0 = meta_from_checkpoint(res.init_checkpoint);
  CHECK(meta0.step == 0);
  CHECK(params_fingerprint(model_from_checkpoint(res.init_checkpoint).params()) ==
        params_fingerprint(init_model(cfg).params()));
}

TEST_CASE("training reduces the pretraining loss") {
  auto cfg = tiny_config();
  cfg.data.n_train = 16;
  cfg.max_steps = 200;
  cfg.base_lr = 1e-3;
  auto ds = dataset_for(cfg);
  auto res = run_pretrain(cfg, ds);
  // Compare the first and last csv rows' loss column.
  auto row_loss = [&](size_t row) {
    size_t pos = 0;
    for (size_t r = 0; r <= row; ++r) pos = res.metrics_csv.find('\n', pos) + 1;
    size_t c1 = res.metrics_csv.find(',', pos);
    size_t c2 = res.metrics_csv.find(',', c1 + 1);
    size_t c3 = res.metrics_csv.find(',', c2 + 1);
    return std::stod(res.metrics_csv.substr(c2 + 1, c3 - c2 - 1));
  };
  CHECK(row_loss(size_t(cfg.max_steps) - 1) < row_loss(0));
}

TEST_CASE("linear_probe trains the head but never the backbone") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  auto model = init_model(cfg);
  const uint64_t before = params_fingerprint(model.params());
  auto res = linear_probe(model, ds, cfg.probe, cfg.seed);
  CHECK(params_fingerprint(model.params()) == before);
  CHECK(res.train_accuracy >= 0.0);
  CHECK(res.train_accuracy <= 1.0);
  CHECK(res.test_accuracy >= 0.0);
  CHECK(res.test_accuracy <= 1.0);
}

TEST_CASE("linear_probe is deterministic in its seed") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  auto model = init_model(cfg);
  auto a = linear_probe(model, ds, cfg.probe, 5);
  auto b = linear_probe(model, ds, cfg.probe, 5);
  CHECK(a.train_accuracy == b.train_accuracy);
  CHECK(a.test_accuracy == b.test_accuracy);
}

TEST_CASE("finetune_classifier updates the backbone and reports accuracy") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  auto model = init_model(cfg);
  const uint64_t before = params_fingerprint(model.params());
  cfg.probe.epochs = 1;
  const double acc = finetune_classifier(model, ds, cfg.probe, cfg.seed);
  CHECK(params_fingerprint(model.params()) != before);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}

TEST_CASE("reconstruct_by_probing thresholds are nested and tau 0 accepts everything") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  auto model = init_model(cfg);
  const std::vector<double> taus{0.0, 0.3, 0.6, 0.9};
  auto rec = reconstruct_by_probing(model, ds.test[0].cloud, cfg.mask, 64, taus, 17);
  REQUIRE(rec.by_tau.size() == taus.size());
  REQUIRE(rec.probs.size() == rec.probes.size());
  CHECK(rec.by_tau[0].accepted.size() == rec.probes.size());
  for (size_t i = 1; i < taus.size(); ++i) {
    CHECK(rec.by_tau[i].tau == taus[i]);
    CHECK(rec.by_tau[i].accepted.size() <= rec.by_tau[i - 1].accepted.size());
    // Subset property: every accepted point at the higher tau appears at the
    // lower tau as well. Points are drawn once, so object identity holds.
    for (const auto& p : rec.by_tau[i].accepted) {
      bool found = false;
      for (const auto& q : rec.by_tau[i - 1].accepted)
        if (p.x == q.x && p.y == q.y && p.z == q.z) {
          found = true;
          break;
        }
      CHECK(found);
    }
  }
  for (double pr : rec.probs) {
    CHECK(pr >= 0.0);
    CHECK(pr <= 1.0);
  }
}

TEST_CASE("reconstruction probes depend on the seed, not the checkpoint") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  auto a = init_model(cfg);
  auto cfg2 = cfg;
  cfg2.seed = 99;
  auto b = init_model(cfg2);
  auto ra = reconstruct_by_probing(a, ds.test[0].cloud, cfg.mask, 32, {0.5}, 21);
  auto rb = reconstruct_by_probing(b, ds.test[0].cloud, cfg.mask, 32, {0.5}, 21);
  REQUIRE(ra.probes.size() == rb.probes.size());
  for (size_t i = 0; i < ra.probes.size(); ++i) {
    CHECK(ra.probes[i].x == rb.probes[i].x);
    CHECK(ra.probes[i].y == rb.probes[i].y);
    CHECK(ra.probes[i].z == rb.probes[i].z);
  }
}

TEST_CASE("eval_query_accuracy shows identical queries to different models") {
  auto cfg = tiny_config();
  auto ds = dataset_for(cfg);
  auto model = init_model(cfg);
  auto a = eval_query_accuracy(model, ds.test, cfg.mask, cfg.loss, 3);
  auto b = eval_query_accuracy(model, ds.test, cfg.mask, cfg.loss, 3);
  CHECK(a.acc_mean == b.acc_mean);
  CHECK(a.n_real == b.n_real);
  CHECK(a.n_fake == b.n_fake);
  CHECK(a.n_real > 0);
  // acc_mean is the balanced mean when both sides are populated.
  if (a.n_fake > 0) CHECK(a.acc_mean == doctest::Approx(0.5 * (a.acc_real + a.acc_fake)));
}

TEST_CASE("ablation harness covers the axis values deterministically") {
  auto cfg = tiny_config();
  auto rows = run_ablation(cfg, "mask_ratio", {"0.5", "0.75"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].axis == "mask_ratio");
  CHECK(rows[0].value == "0.5");
  CHECK(rows[1].value == "0.75");
  for (const auto& r : rows) {
    CHECK(r.query_accuracy >= 0.0);
    CHECK(r.query_accuracy <= 1.0);
    CHECK(r.probe_accuracy >= 0.0);
    CHECK(r.probe_accuracy <= 1.0);
  }
  auto again = run_ablation(cfg, "mask_ratio", {"0.5", "0.75"});
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].query_accuracy == again[i].query_accuracy);
    CHECK(rows[i].probe_accuracy == again[i].probe_accuracy);
  }

  auto dec_rows = run_ablation(cfg, "dec_layers", {"1", "2"});
  REQUIRE(dec_rows.size() == 2);
  CHECK_THROWS_AS(run_ablation(cfg, "wibble", {"1"}), std::invalid_argument);
}

TEST_CASE("ablation csv and default axes match the documented shape") {
  auto axes = default_ablation_axes();
  std::set<std::string> names;
  for (const auto& [axis, values] : axes) {
    names.insert(axis);
    CHECK(!values.empty());
  }
  CHECK(names.count("mask_ratio") == 1);
  CHECK(names.count("mask_mode") == 1);
  CHECK(names.count("n_queries") == 1);
  CHECK(names.count("dec_layers") == 1);
  // Four mask ratios, per the reported ablation table structure.
  for (const auto& [axis, values] : axes)
    if (axis == "mask_ratio") CHECK(values.size() == 4);

  std::vector<AblationRow> rows{{"mask_ratio", "0.5", 0.75, 0.5}};
  auto csv = ablation_csv(rows);
  CHECK(csv.rfind("axis,value,query_accuracy,probe_accuracy\n", 0) == 0);
  CHECK(csv.find("mask_ratio,0.5,") != std::string::npos);
  CHECK(!ablation_reference_note("mask_ratio").empty());
}

TEST_CASE("manifest records seed, artifacts, and the resolved config") {
  auto cfg = tiny_config();
  auto text = manifest_text(cfg, "2026-01-01T00:00:00Z", {"metrics.csv", "model.ckpt"});
  CHECK(text.find("start_time = 2026-01-01T00:00:00Z") != std::string::npos);
  CHECK(text.find("seed = 11") != std::string::npos);
  CHECK(text.find("artifact = metrics.csv") != std::string::npos);
  CHECK(text.find("artifact = model.ckpt") != std::string::npos);
  CHECK(text.find(serialize_train_config(cfg)) != std::string::npos);
}
