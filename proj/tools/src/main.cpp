// Command line front end: dataset generation, pretraining, probing,
// finetuning, occupancy reconstruction, ablations, and numerical
// self-checks. Every artifact lands inside the subcommand's --out
// directory; progress goes to the error stream, results to stdout.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpt/checkpoint.hpp"
#include "mpt/config.hpp"
#include "mpt/dataset.hpp"
#include "mpt/geometry.hpp"
#include "mpt/gradcheck.hpp"
#include "mpt/io.hpp"
#include "mpt/train.hpp"

namespace fs = std::filesystem;
using namespace mpt;

namespace {

// %.9g, but always with a decimal point so "0" prints as "0.0".
std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  std::string s = buf;
  if (s.find_first_of(".einf") == std::string::npos) s += ".0";
  return s;
}

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

LogFn stderr_log() {
  return [](const std::string& s) { std::cerr << s << "\n"; };
}

struct Overrides {
  CLI::Option* seed = nullptr;
  CLI::Option* mask_ratio = nullptr;
  CLI::Option* mask_type = nullptr;
  CLI::Option* n_queries = nullptr;
  uint64_t seed_v = 0;
  double mask_ratio_v = 0.0;
  std::string mask_type_v;
  int n_queries_v = 0;

  void attach(CLI::App* sub) {
    seed = sub->add_option("--seed", seed_v, "Override the config seed");
    mask_ratio = sub->add_option("--mask-ratio", mask_ratio_v, "Override the mask ratio");
    mask_type = sub->add_option("--mask-type", mask_type_v, "Override the mask type (random|block)");
    n_queries = sub->add_option("--n-queries", n_queries_v, "Override the query count per side");
  }

  void apply(TrainConfig& cfg) const {
    if (seed && seed->count()) cfg.seed = seed_v;
    if (mask_ratio && mask_ratio->count()) cfg.mask.ratio = mask_ratio_v;
    if (mask_type && mask_type->count()) cfg.mask.mode = mask_mode_from_name(mask_type_v);
    if (n_queries && n_queries->count()) cfg.mask.n_queries = n_queries_v;
  }
};

TrainConfig resolve_config(const std::string& config_path, const Overrides& ov) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_train_config(config_path);
  ov.apply(cfg);
  cfg.validate();
  return cfg;
}

fs::path make_out_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

int cmd_gen_data(const TrainConfig& cfg, const std::string& out) {
  const fs::path dir = make_out_dir(out);
  fs::create_directories(dir / "train");
  fs::create_directories(dir / "test");

  // Clearing data_dir makes dataset_for synthesize: gen-data output reloads
  // into exactly the dataset an in-memory run would use.
  TrainConfig gen_cfg = cfg;
  gen_cfg.data_dir.clear();
  const Dataset ds = dataset_for(gen_cfg);
  auto dump = [&](const std::vector<LabeledCloud>& split, const char* name) {
    for (size_t i = 0; i < split.size(); ++i) {
      char fname[64];
      std::snprintf(fname, sizeof(fname), "cloud_%04zu_class%d.xyz", i, split[i].label);
      write_text(dir / name / fname, write_xyz(split[i].cloud));
    }
  };
  dump(ds.train, "train");
  dump(ds.test, "test");

  write_text(dir / "manifest.txt", manifest_text(cfg, now_utc(), {"train/", "test/"}));
  std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size() << " test clouds to " << dir.string()
            << "\n";
  return 0;
}

int cmd_pretrain(const TrainConfig& cfg, const std::string& out) {
  const fs::path dir = make_out_dir(out);
  write_text(dir / "manifest.txt",
             manifest_text(cfg, now_utc(), {"manifest.txt", "metrics.csv", "init.ckpt", "model.ckpt"}));

  const Dataset ds = dataset_for(cfg);
  std::cerr << "dataset: " << ds.train.size() << " train / " << ds.test.size() << " test clouds\n";

  const TrainResult res = run_pretrain(cfg, ds, stderr_log());
  write_text(dir / "metrics.csv", res.metrics_csv);
  save_checkpoint(res.init_checkpoint, (dir / "init.ckpt").string());
  save_checkpoint(res.checkpoint, (dir / "model.ckpt").string());

  std::cout << "steps " << res.total_steps << " final_loss " << fmt_num(res.final_loss) << "\n";
  return 0;
}

int cmd_probe(const TrainConfig& cfg, const std::string& ckpt, const std::string& out) {
  MptModel<float> model = ckpt.empty() ? init_model(cfg) : model_from_checkpoint(load_checkpoint(ckpt));
  if (ckpt.empty()) std::cerr << "no --ckpt given: probing a randomly initialized encoder\n";

  const Dataset ds = dataset_for(cfg);
  const ProbeResult res = linear_probe(model, ds, cfg.probe, cfg.seed);

  std::string report = "probe train_accuracy " + fmt_num(res.train_accuracy) + "\nprobe test_accuracy " +
                       fmt_num(res.test_accuracy) + "\n";
  std::cout << report;
  if (!out.empty()) write_text(make_out_dir(out) / "probe.txt", report);
  return 0;
}

int cmd_classify(const TrainConfig& cfg, const std::string& ckpt, const std::string& out) {
  MptModel<float> model = ckpt.empty() ? init_model(cfg) : model_from_checkpoint(load_checkpoint(ckpt));
  if (ckpt.empty()) std::cerr << "no --ckpt given: finetuning from random initialization\n";

  const Dataset ds = dataset_for(cfg);
  const double acc = finetune_classifier(model, ds, cfg.probe, cfg.seed, stderr_log());

  std::string report = "classify test_accuracy " + fmt_num(acc) + "\n";
  std::cout << report;
  if (!out.empty()) write_text(make_out_dir(out) / "classify.txt", report);
  return 0;
}

int cmd_reconstruct(const TrainConfig& cfg, const std::string& ckpt, const std::string& input, double tau,
                    int n_probes, const std::string& out) {
  MptModel<float> model = ckpt.empty() ? init_model(cfg) : model_from_checkpoint(load_checkpoint(ckpt));
  if (ckpt.empty()) std::cerr << "no --ckpt given: reconstructing with an untrained encoder\n";

  PointCloud cloud;
  if (!input.empty()) {
    cloud = load_cloud_file(input);
  } else {
    Rng rng(derive_seed(cfg.seed, 0xC10D));
    cloud = gen_shape(ShapeKind::torus, cfg.data.n_points, cfg.data.jitter, rng);
    std::cerr << "no input cloud given: reconstructing a synthetic torus\n";
  }

  const ProbeReconstruction rec = reconstruct_by_probing(model, cloud, cfg.mask, n_probes, {tau}, cfg.seed);
  const ReconstructionResult& r = rec.by_tau.front();

  const fs::path dir = make_out_dir(out);
  std::vector<double> quality;
  PointCloud accepted;
  for (size_t i = 0; i < rec.probes.size(); ++i) {
    if (rec.probs[i] >= tau) {
      accepted.push_back(rec.probes[i]);
      quality.push_back(rec.probs[i]);
    }
  }
  write_text(dir / "recon.ply", write_ply_ascii(accepted, &quality));
  write_text(dir / "original.ply", write_ply_ascii(cloud));

  std::cout << "tau " << fmt_num(tau) << " accepted " << accepted.size() << " of " << rec.probes.size() << " chamfer "
            << fmt_num(r.chamfer) << "\n";
  return 0;
}

int cmd_ablate(const TrainConfig& cfg, const std::string& axis, const std::string& out) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  if (axis == "all") {
    axes = default_ablation_axes();
  } else {
    for (auto& a : default_ablation_axes())
      if (a.first == axis) axes.push_back(a);
    if (axes.empty()) throw std::runtime_error("unknown ablation axis '" + axis + "'");
  }

  std::vector<AblationRow> rows;
  for (const auto& [name, values] : axes) {
    std::cerr << "ablating " << name << " over " << values.size() << " values\n";
    auto part = run_ablation(cfg, name, values, stderr_log());
    rows.insert(rows.end(), part.begin(), part.end());
    std::cout << ablation_reference_note(name) << "\n";
  }

  const std::string csv = ablation_csv(rows);
  std::cout << csv;
  if (!out.empty()) write_text(make_out_dir(out) / "ablation.csv", csv);
  return 0;
}

int cmd_chamfer(const std::string& a, const std::string& b) {
  const PointCloud ca = load_cloud_file(a);
  const PointCloud cb = load_cloud_file(b);
  std::cout << fmt_num(chamfer_l2(ca, cb)) << "\n";
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  for (const GradCheckResult& r : run_op_gradchecks()) {
    const bool pass = r.max_rel_err < kOpGradTolerance;
    ok = ok && pass;
    std::cout << r.name << " max_rel_err " << fmt_num(r.max_rel_err) << " coords " << r.coords_checked << " "
              << (pass ? "ok" : "FAIL") << "\n";
  }
  const GradCheckResult m = run_model_gradcheck(200);
  const bool mpass = m.max_rel_err < kModelGradTolerance;
  ok = ok && mpass;
  std::cout << m.name << " max_rel_err " << fmt_num(m.max_rel_err) << " coords " << m.coords_checked << " "
            << (mpass ? "ok" : "FAIL") << "\n";
  std::cout << (ok ? "gradcheck ok" : "gradcheck FAILED") << "\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked point discrimination: pretraining, probing, and reconstruction"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt_path, input_path, cloud_a, cloud_b;
  std::string ablate_axis = "all";
  double threshold = 0.5;
  int n_probes = 4096;

  Overrides ov_gen, ov_pre, ov_probe, ov_cls, ov_rec, ov_abl;

  CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic 4-class dataset as .xyz files");
  gen->add_option("--config", config_path, "Config file (flat key = value)");
  gen->add_option("--out", out_dir, "Output directory")->required();
  ov_gen.attach(gen);

  CLI::App* pre = app.add_subcommand("pretrain", "Pretrain by masked-patch query discrimination");
  pre->add_option("--config", config_path, "Config file (flat key = value)");
  pre->add_option("--out", out_dir, "Output directory")->required();
  ov_pre.attach(pre);

  CLI::App* probe = app.add_subcommand("probe", "Linear probe on frozen cloud descriptors");
  probe->add_option("--config", config_path, "Config file (flat key = value)");
  probe->add_option("--ckpt", ckpt_path, "Checkpoint to probe (omit for random init)");
  probe->add_option("--out", out_dir, "Optional output directory for probe.txt");
  ov_probe.attach(probe);

  CLI::App* cls = app.add_subcommand("classify", "Finetune backbone plus classifier head");
  cls->add_option("--config", config_path, "Config file (flat key = value)");
  cls->add_option("--ckpt", ckpt_path, "Checkpoint to start from (omit for random init)");
  cls->add_option("--out", out_dir, "Optional output directory for classify.txt");
  ov_cls.attach(cls);

  CLI::App* rec = app.add_subcommand("reconstruct", "Occupancy-probe reconstruction to PLY");
  rec->add_option("input", input_path, "Input cloud (.xyz/.ply/.off); omit for a synthetic torus");
  rec->add_option("--config", config_path, "Config file (flat key = value)");
  rec->add_option("--ckpt", ckpt_path, "Checkpoint to reconstruct with (omit for untrained)");
  rec->add_option("--threshold", threshold, "Occupancy probability threshold tau");
  rec->add_option("--probe-samples", n_probes, "Number of uniform box probes");
  rec->add_option("--out", out_dir, "Output directory")->required();
  ov_rec.attach(rec);

  CLI::App* abl = app.add_subcommand("ablate", "Sweep mask ratio, mask type, query count, decoder depth");
  abl->add_option("--config", config_path, "Config file (flat key = value)");
  abl->add_option("--axis", ablate_axis, "Axis to sweep (mask_ratio|mask_mode|n_queries|dec_layers|all)");
  abl->add_option("--out", out_dir, "Optional output directory for ablation.csv");
  ov_abl.attach(abl);

  CLI::App* cham = app.add_subcommand("chamfer", "Chamfer distance between two cloud files");
  cham->add_option("a", cloud_a, "First cloud file")->required();
  cham->add_option("b", cloud_b, "Second cloud file")->required();

  app.add_subcommand("gradcheck", "Finite-difference checks for every differentiable op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(resolve_config(config_path, ov_gen), out_dir);
    if (pre->parsed()) return cmd_pretrain(resolve_config(config_path, ov_pre), out_dir);
    if (probe->parsed()) return cmd_probe(resolve_config(config_path, ov_probe), ckpt_path, out_dir);
    if (cls->parsed()) return cmd_classify(resolve_config(config_path, ov_cls), ckpt_path, out_dir);
    if (rec->parsed())
      return cmd_reconstruct(resolve_config(config_path, ov_rec), ckpt_path, input_path, threshold, n_probes, out_dir);
    if (abl->parsed()) return cmd_ablate(resolve_config(config_path, ov_abl), ablate_axis, out_dir);
    if (cham->parsed()) return cmd_chamfer(cloud_a, cloud_b);
    return cmd_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
