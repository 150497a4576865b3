#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mpt/optim.hpp"
#include "mpt/tensor.hpp"

using namespace mpt;

namespace {

Tensor<double> T(Shape shape, std::vector<double> v) { return Tensor<double>::from(shape, std::move(v)); }

}  // namespace

TEST_CASE("matmul frozen 2x2 example") {
  auto c = matmul(T({2, 2}, {1, 2, 3, 4}), T({2, 2}, {5, 6, 7, 8}));
  CHECK(c.value() == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul_nt equals matmul against the transpose") {
  auto a = T({2, 3}, {1, -2, 3, 0.5, 4, -1});
  auto b = T({4, 3}, {2, 1, 0, -1, 3, 2, 0, 0, 1, 5, -2, 3});
  std::vector<double> bt(12);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) bt[size_t(j) * 4 + size_t(i)] = b.value()[size_t(i) * 3 + size_t(j)];
  auto ref = matmul(a, T({3, 4}, bt));
  auto got = matmul_nt(a, b);
  REQUIRE(got.size() == ref.size());
  for (size_t i = 0; i < got.size(); ++i) CHECK(got.value()[i] == doctest::Approx(ref.value()[i]).epsilon(1e-12));
}

TEST_CASE("softmax frozen row and invariance under shift") {
  auto s = softmax_rows(T({1, 3}, {1, 2, 3}));
  CHECK(s.value()[0] == doctest::Approx(0.090030573).epsilon(1e-8));
  CHECK(s.value()[1] == doctest::Approx(0.244728471).epsilon(1e-8));
  CHECK(s.value()[2] == doctest::Approx(0.665240956).epsilon(1e-8));
  auto shifted = softmax_rows(T({1, 3}, {1001, 1002, 1003}));
  for (int i = 0; i < 3; ++i) CHECK(shifted.value()[size_t(i)] == doctest::Approx(s.value()[size_t(i)]).epsilon(1e-12));
}

TEST_CASE("gelu frozen value and antisymmetric identity") {
  auto g = gelu(T({1, 1}, {1.0}));
  CHECK(g.value()[0] == doctest::Approx(0.8413447461).epsilon(1e-9));
  // gelu(x) - gelu(-x) == x, since the gaussian cdf satisfies
  // phi(x) + phi(-x) == 1.
  for (double x : {0.3, 1.7, -2.2, 0.0}) {
    auto a = gelu(T({1, 1}, {x})), b = gelu(T({1, 1}, {-x}));
    CHECK(a.value()[0] - b.value()[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("layer_norm_rows yields zero mean and unit variance per row") {
  auto gain = T({4}, {1, 1, 1, 1});
  auto bias = T({4}, {0, 0, 0, 0});
  auto out = layer_norm_rows(T({2, 4}, {1, 2, 3, 4, -5, 0, 5, 10}), gain, bias, 1e-12);
  for (int r = 0; r < 2; ++r) {
    double m = 0, v = 0;
    for (int c = 0; c < 4; ++c) m += out.value()[size_t(r) * 4 + size_t(c)];
    m /= 4;
    for (int c = 0; c < 4; ++c) {
      const double d = out.value()[size_t(r) * 4 + size_t(c)] - m;
      v += d * d;
    }
    CHECK(std::abs(m) < 1e-9);
    CHECK(v / 4 == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("focal loss frozen values") {
  // p = sigmoid(z) = 0.9 -> z = ln 9; positive label, alpha .25, gamma 2.
  const double z = std::log(9.0);
  auto pos = focal_loss_mean(T({1, 1}, {z}), {1}, 0.25, 2.0);
  CHECK(pos.value()[0] == doctest::Approx(2.634013e-4).epsilon(1e-8));
  auto neg = focal_loss_mean(T({1, 1}, {z}), {0}, 0.25, 2.0);
  CHECK(neg.value()[0] == doctest::Approx(1.398820).epsilon(1e-5));
}

TEST_CASE("focal loss at gamma 0 alpha .5 is half of binary cross entropy") {
  Rng rng(0x10C);
  for (int trial = 0; trial < 20; ++trial) {
    const double z = rng.uniform(-4.0, 4.0);
    const int y = int(rng.below(2));
    auto f = focal_loss_mean(T({1, 1}, {z}), {y}, 0.5, 0.0);
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double bce = y ? -std::log(p) : -std::log(1.0 - p);
    CHECK(f.value()[0] == doctest::Approx(0.5 * bce).epsilon(1e-10));
  }
}

TEST_CASE("cross_entropy_logits matches a hand softmax") {
  auto ce = cross_entropy_logits(T({1, 3}, {1, 2, 3}), {2});
  CHECK(ce.value()[0] == doctest::Approx(-std::log(0.665240956)).epsilon(1e-8));
}

TEST_CASE("dropout scales by keep probability and is identity in eval") {
  Rng rng(0xD0);
  auto x = T({1, 1000}, std::vector<double>(1000, 1.0));
  auto eval = dropout(x, 0.4, false, rng);
  CHECK(eval.value() == x.value());
  double acc = 0.0;
  int zeros = 0;
  auto train = dropout(x, 0.4, true, rng);
  for (double v : train.value()) {
    acc += v;
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.6).epsilon(1e-12));
  }
  CHECK(zeros > 300);
  CHECK(zeros < 500);
  CHECK(acc / 1000 == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("droppath keeps or drops the whole tensor") {
  Rng rng(0xD7);
  auto x = T({2, 3}, {1, 2, 3, 4, 5, 6});
  int dropped = 0, kept = 0;
  for (int i = 0; i < 200; ++i) {
    auto y = droppath(x, 0.3, true, rng);
    if (y.value()[0] == 0.0) {
      for (double v : y.value()) CHECK(v == 0.0);
      ++dropped;
    } else {
      for (size_t j = 0; j < y.size(); ++j)
        CHECK(y.value()[j] == doctest::Approx(x.value()[j] / 0.7).epsilon(1e-12));
      ++kept;
    }
  }
  CHECK(dropped > 30);
  CHECK(kept > 100);
}

TEST_CASE("max_over_rows takes a column-wise maximum") {
  auto m = max_over_rows(T({3, 2}, {1, 9, 5, 2, 3, 4}));
  CHECK(m.value() == std::vector<double>{5, 9});
}

TEST_CASE("concat and slice round-trip rows and columns") {
  auto a = T({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = T({1, 3}, {7, 8, 9});
  auto cat = concat_rows<double>({a, b});
  CHECK(cat.dim(0) == 3);
  CHECK(slice_rows(cat, 2, 1).value() == b.value());
  auto cols = concat_cols<double>({a, T({2, 1}, {-1, -2})});
  CHECK(cols.dim(1) == 4);
  CHECK(slice_cols(cols, 3, 1).value() == std::vector<double>{-1, -2});
}

TEST_CASE("shape errors are rejected") {
  CHECK_THROWS_AS(matmul(T({2, 3}, std::vector<double>(6, 0.0)), T({2, 3}, std::vector<double>(6, 0.0))),
                  std::invalid_argument);
  CHECK_THROWS_AS(add(T({2, 2}, {1, 2, 3, 4}), T({1, 4}, {1, 2, 3, 4})), std::invalid_argument);
  CHECK_THROWS_AS(focal_loss_mean(T({2, 1}, {0, 0}), {1}, 0.25, 2.0), std::invalid_argument);
}

TEST_CASE("backward accumulates into leaf parameters") {
  auto w = Tensor<double>::param({2, 2}, {1, 2, 3, 4});
  auto x = T({1, 2}, {1, 1});
  auto loss = sum_all(matmul(x, w));
  backward(loss);
  REQUIRE(w.grad().size() == 4);
  for (double g : w.grad()) CHECK(g == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("adamw one-step frozen example") {
  // theta=1, g=0.1, lr=0.01, wd=0: first step moves by almost exactly -lr
  // because mhat/sqrt(vhat) == 1 up to epsilon.
  auto theta = Tensor<double>::param({1}, {1.0});
  AdamW<double> opt(0.9, 0.999, 1e-8, 0.0);
  opt.add_param("w.weight", theta, true);
  opt.zero_grad();
  backward(scale(theta, 0.1));
  opt.step(0.01);
  CHECK(theta.value()[0] == doctest::Approx(0.99).epsilon(1e-6));
}

TEST_CASE("adamw decoupled weight decay shrinks parameters with zero grad") {
  auto theta = Tensor<double>::param({1}, {2.0});
  AdamW<double> opt(0.9, 0.999, 1e-8, 0.05);
  opt.add_param("w.weight", theta, true);
  opt.zero_grad();
  opt.step(0.1);
  CHECK(theta.value()[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.05)).epsilon(1e-12));
}

TEST_CASE("adamw converges on a quadratic") {
  auto theta = Tensor<double>::param({1}, {5.0});
  AdamW<double> opt(0.9, 0.999, 1e-8, 0.0);
  opt.add_param("w.weight", theta, true);
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    auto loss = mul(theta, theta);
    backward(loss);
    opt.step(0.05);
  }
  CHECK(std::abs(theta.value()[0]) < 1e-4);
}

TEST_CASE("lr_schedule warms up linearly then decays by cosine") {
  const double base = 1e-3;
  const int total = 100, warmup = 10;
  CHECK(lr_schedule(0, total, warmup, base) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(lr_schedule(5, total, warmup, base) == doctest::Approx(base * 0.5).epsilon(1e-12));
  CHECK(lr_schedule(10, total, warmup, base) == doctest::Approx(base).epsilon(1e-12));
  // Midpoint of the cosine segment sits at base/2.
  CHECK(lr_schedule(55, total, warmup, base) == doctest::Approx(base / 2).epsilon(1e-12));
  CHECK(lr_schedule(100, total, warmup, base) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("chamfer_loss value matches chamfer_l2 on the same pair") {
  PointCloud target{{3, 0, 0}, {0, 3, 0}, {0, 0, 3}};
  auto pred = T({2, 3}, {1, 0, 0, 0, 1, 1});
  PointCloud pc{{1, 0, 0}, {0, 1, 1}};
  CHECK(chamfer_loss(pred, target).value()[0] == doctest::Approx(chamfer_l2(pc, target)).epsilon(1e-12));
}
