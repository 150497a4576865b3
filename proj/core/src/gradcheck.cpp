#include "mpt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "mpt/dataset.hpp"
#include "mpt/model.hpp"
#include "mpt/tensor.hpp"

namespace mpt {

namespace {

constexpr double kH = 1e-4;

// The composed graph needs a finer step: with N(0, 0.02) init some relu
// pre-activation sits within 1e-4 of its kink along almost any parameter
// direction, and a straddling central difference averages the two slopes.
// At 1e-6 the difference sits inside one smooth piece while rounding noise
// (eps * |loss| / h) stays near 1e-11.
constexpr double kHModel = 1e-6;

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

using Fwd = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct Fixture {
  std::string name;
  std::vector<Shape> shapes;
  Fwd fn;                    // builds a scalar loss from fresh inputs
  double kink_margin = 0.0;  // keep |value| above this (relu/max fixtures)
};

std::vector<std::vector<double>> draw_inputs(const Fixture& f, Rng& rng) {
  std::vector<std::vector<double>> vals;
  for (const Shape& s : f.shapes) {
    std::vector<double> v(static_cast<size_t>(shape_numel(s)));
    for (double& x : v) {
      x = rng.normal();
      if (f.kink_margin > 0.0 && std::abs(x) < f.kink_margin) x = x < 0 ? x - f.kink_margin : x + f.kink_margin;
    }
    vals.push_back(std::move(v));
  }
  return vals;
}

GradCheckResult check_fixture(const Fixture& f, uint64_t seed) {
  Rng rng(seed);
  const auto base = draw_inputs(f, rng);

  auto eval = [&](const std::vector<std::vector<double>>& vals, bool want_grads,
                  std::vector<std::vector<double>>* grads_out) {
    std::vector<Tensor<double>> inputs;
    for (size_t i = 0; i < f.shapes.size(); ++i) inputs.push_back(Tensor<double>::param(f.shapes[i], vals[i]));
    auto loss = f.fn(inputs);
    const double value = loss.item();
    if (want_grads) {
      backward(loss);
      grads_out->clear();
      for (auto& t : inputs) grads_out->push_back(t.grad());
    }
    return value;
  };

  std::vector<std::vector<double>> grads;
  eval(base, true, &grads);

  GradCheckResult res{f.name, 0.0, 0};
  for (size_t i = 0; i < base.size(); ++i) {
    for (size_t j = 0; j < base[i].size(); ++j) {
      auto plus = base;
      auto minus = base;
      plus[i][j] += kH;
      minus[i][j] -= kH;
      const double numeric = (eval(plus, false, nullptr) - eval(minus, false, nullptr)) / (2 * kH);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(grads[i][j], numeric));
      ++res.coords_checked;
    }
  }
  return res;
}

// A fixed random weighting turns a non-scalar op output into a scalar loss
// with a non-degenerate gradient.
Tensor<double> weighted_sum(const Tensor<double>& t, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(size_t(t.size()));
  for (double& x : w) x = rng.normal();
  return sum_all(mul(t, Tensor<double>::from(t.shape(), std::move(w))));
}

std::vector<Fixture> op_fixtures() {
  std::vector<Fixture> fx;
  auto W = [](const Tensor<double>& t) { return weighted_sum(t, 0x5EED); };

  fx.push_back({"add", {{3, 4}, {3, 4}}, [W](const auto& in) { return W(add(in[0], in[1])); }, 0.0});
  fx.push_back({"sub", {{3, 4}, {3, 4}}, [W](const auto& in) { return W(sub(in[0], in[1])); }, 0.0});
  fx.push_back({"mul", {{3, 4}, {3, 4}}, [W](const auto& in) { return W(mul(in[0], in[1])); }, 0.0});
  fx.push_back({"scale", {{3, 4}}, [W](const auto& in) { return W(scale(in[0], 1.7)); }, 0.0});
  fx.push_back({"add_rowvec", {{3, 5}, {5}}, [W](const auto& in) { return W(add_rowvec(in[0], in[1])); }, 0.0});
  fx.push_back({"matmul", {{3, 4}, {4, 5}}, [W](const auto& in) { return W(matmul(in[0], in[1])); }, 0.0});
  fx.push_back({"matmul_nt", {{3, 4}, {5, 4}}, [W](const auto& in) { return W(matmul_nt(in[0], in[1])); }, 0.0});
  fx.push_back({"relu", {{4, 5}}, [W](const auto& in) { return W(relu(in[0])); }, 0.05});
  fx.push_back({"gelu", {{4, 5}}, [W](const auto& in) { return W(gelu(in[0])); }, 0.0});
  fx.push_back({"sigmoid", {{4, 5}}, [W](const auto& in) { return W(sigmoid(in[0])); }, 0.0});
  fx.push_back({"softmax_rows", {{4, 6}}, [W](const auto& in) { return W(softmax_rows(in[0])); }, 0.0});
  fx.push_back({"layer_norm_rows",
                {{4, 6}, {6}, {6}},
                [W](const auto& in) { return W(layer_norm_rows(in[0], in[1], in[2], 1e-5)); },
                0.0});
  fx.push_back({"sum_all", {{3, 4}}, [](const auto& in) { return sum_all(in[0]); }, 0.0});
  fx.push_back({"mean_all", {{3, 4}}, [](const auto& in) { return mean_all(in[0]); }, 0.0});
  // max needs well-separated entries so the argmax never flips under +-h.
  fx.push_back({"max_over_rows", {{5, 4}}, [W](const auto& in) { return W(max_over_rows(in[0])); }, 0.01});
  fx.push_back({"concat_rows",
                {{2, 4}, {3, 4}},
                [W](const auto& in) { return W(concat_rows<double>({in[0], in[1]})); },
                0.0});
  fx.push_back({"slice_rows", {{5, 4}}, [W](const auto& in) { return W(slice_rows(in[0], 1, 3)); }, 0.0});
  fx.push_back({"concat_cols",
                {{3, 2}, {3, 4}},
                [W](const auto& in) { return W(concat_cols<double>({in[0], in[1]})); },
                0.0});
  fx.push_back({"slice_cols", {{3, 6}}, [W](const auto& in) { return W(slice_cols(in[0], 2, 3)); }, 0.0});
  fx.push_back({"reshape", {{3, 4}}, [W](const auto& in) { return W(reshape(in[0], {2, 6})); }, 0.0});
  fx.push_back({"dropout", {{4, 6}}, [W](const auto& in) {
                  Rng r(0xD0);  // frozen pattern: same mask at every finite-difference evaluation
                  return W(dropout(in[0], 0.3, true, r));
                },
                0.0});
  fx.push_back({"droppath", {{4, 6}}, [W](const auto& in) {
                  Rng r(0xD1);
                  return W(droppath(in[0], 0.3, true, r));
                },
                0.0});
  fx.push_back({"focal_loss_mean", {{8, 1}}, [](const auto& in) {
                  const std::vector<int> labels{1, 0, 1, 1, 0, 0, 1, 0};
                  return focal_loss_mean(in[0], labels, 0.25, 2.0);
                },
                0.0});
  fx.push_back({"focal_loss_mean_gamma0", {{8, 1}}, [](const auto& in) {
                  const std::vector<int> labels{1, 0, 1, 1, 0, 0, 1, 0};
                  return focal_loss_mean(in[0], labels, 0.5, 0.0);
                },
                0.0});
  fx.push_back({"cross_entropy_logits", {{5, 4}}, [](const auto& in) {
                  const std::vector<int> labels{0, 3, 1, 2, 0};
                  return cross_entropy_logits(in[0], labels);
                },
                0.0});
  // Well-separated target so nearest neighbors never flip under +-h.
  fx.push_back({"chamfer_loss", {{4, 3}}, [](const auto& in) {
                  const PointCloud target{{3, 0, 0}, {0, 3, 0}, {0, 0, 3}, {-3, -3, -3}, {3, 3, 3}};
                  return chamfer_loss(in[0], target);
                },
                0.0});
  return fx;
}

}  // namespace

std::vector<GradCheckResult> run_op_gradchecks() {
  std::vector<GradCheckResult> results;
  uint64_t seed = 0xBA5E;
  for (const Fixture& f : op_fixtures()) results.push_back(check_fixture(f, seed++));
  return results;
}

GradCheckResult run_model_gradcheck(int n_coords) {
  ModelConfig cfg;
  cfg.dim = 16;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 2;
  cfg.n_dec_layers = 1;
  cfg.ffn_ratio = 2;
  cfg.patch_count = 8;
  cfg.patch_size = 8;
  cfg.head_hidden = 16;
  cfg.dropout_p = 0.1;
  cfg.droppath_p = 0.1;

  MptModel<double> model(cfg, 0xC0DE);

  Rng cloud_rng(0xC10D);
  const PointCloud cloud = gen_shape(ShapeKind::torus, 64, 0.02, cloud_rng);

  MaskConfig mask;
  mask.ratio = 0.75;
  mask.n_queries = 16;
  LossConfig loss;

  // Frozen rng: the mask, query draw, and dropout pattern are identical at
  // every evaluation, so parameters are the only moving part.
  auto forward = [&]() {
    Rng r(0xF00D);
    return model.pretrain_forward(cloud, mask, loss, r, true).loss;
  };

  auto base_loss = forward();
  backward(base_loss);

  struct Coord {
    size_t param;
    size_t index;
  };
  const auto& params = model.params();
  std::vector<Coord> coords;
  Rng pick(0xC0FFEE);
  int64_t total_coords = 0;
  for (const auto& [name, t] : params) total_coords += t.size();
  for (int k = 0; k < n_coords; ++k) {
    int64_t flat = int64_t(pick.below(uint64_t(total_coords)));
    for (size_t p = 0; p < params.size(); ++p) {
      if (flat < params[p].second.size()) {
        coords.push_back({p, size_t(flat)});
        break;
      }
      flat -= params[p].second.size();
    }
  }

  GradCheckResult res{"pretrain_forward", 0.0, 0};
  for (const Coord& c : coords) {
    auto t = params[c.param].second;
    const double analytic = t.grad()[c.index];
    const double saved = t.value()[c.index];
    t.value_mut()[c.index] = saved + kHModel;
    const double fp = forward().item();
    t.value_mut()[c.index] = saved - kHModel;
    const double fm = forward().item();
    t.value_mut()[c.index] = saved;
    res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic, (fp - fm) / (2 * kHModel)));
    ++res.coords_checked;
  }
  return res;
}

}  // namespace mpt
