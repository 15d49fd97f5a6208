#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gradmod/gradcheck.hpp"
#include "gradmod/rng.hpp"
#include "gradmod/tensor.hpp"

using namespace gradmod;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }
std::vector<double> grads(const Tensor& t) { return {t.grad().begin(), t.grad().end()}; }

}  // namespace

TEST_CASE("tensor construction enforces shape and data agreement") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(numel(t.shape()) == t.values().size());
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("matmul") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(vals(matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});
  CHECK(vals(matmul(Tensor({1, 2}, {1, 0}), Tensor({2, 1}, {3, 5}))) == std::vector<double>{3});

  SUBCASE("mismatch names both shapes") {
    try {
      matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
      FAIL("expected a shape error");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2, 3]") != std::string::npos);
      CHECK(msg.find("[4, 2]") != std::string::npos);
    }
  }

  SUBCASE("finite-difference gradient") {
    Rng rng = make_rng(3, Stream::Probe);
    const Tensor w = rand_uniform({3, 2}, rng, -1, 1);
    const auto r = check_gradient(
        "matmul", {rand_uniform({3, 4}, rng, -1, 1, true), rand_uniform({4, 2}, rng, -1, 1, true)},
        [w](const auto& in) { return sum(matmul(in[0], in[1]) * w); }, 20, 11, 1e-6);
    CHECK(r.passed());
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("conv2d") {
  Rng rng = make_rng(4, Stream::Probe);
  const Tensor x = rand_uniform({2, 5, 5}, rng, -1, 1);

  SUBCASE("1x1 identity kernel reproduces the input") {
    const Tensor k({2, 2, 1, 1}, {1, 0, 0, 1});
    CHECK(vals(conv2d(x, k, 1, 0)) == vals(x));
    const Tensor single({1, 1, 1, 1}, {1});
    const Tensor x1 = rand_uniform({1, 4, 4}, rng, -1, 1);
    CHECK(vals(conv2d(x1, single, 1, 0)) == vals(x1));
  }
  SUBCASE("zero kernel gives zero output") {
    const Tensor out = conv2d(x, Tensor::zeros({3, 2, 3, 3}), 1, 1);
    for (double v : out.values()) CHECK(v == 0.0);
  }
  SUBCASE("same padding keeps the size") {
    CHECK(conv2d(x, Tensor::zeros({3, 2, 3, 3}), 1, 1).shape() == Shape{3, 5, 5});
    CHECK(conv2d(x, Tensor::zeros({3, 2, 3, 3}), 2, 1).shape() == Shape{3, 3, 3});
  }
  SUBCASE("cross-correlation, not convolution") {
    // A kernel with a single 1 in its top-left tap reads the pixel up and left.
    std::vector<double> kv(9, 0.0);
    kv[0] = 1.0;
    const Tensor img({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor out = conv2d(img, Tensor({1, 1, 3, 3}, kv), 1, 1);
    CHECK(out[4] == 1.0);  // centre reads (0, 0)
    CHECK(out[8] == 5.0);  // bottom-right reads (1, 1)
  }
  SUBCASE("channel mismatch") { CHECK_THROWS_AS(conv2d(x, Tensor::zeros({3, 4, 3, 3}), 1, 1), ShapeError); }
  SUBCASE("finite-difference gradient") {
    const Tensor w = rand_uniform({3, 5, 5}, rng, -1, 1);
    const auto r = check_gradient(
        "conv2d", {rand_uniform({2, 5, 5}, rng, -1, 1, true), rand_uniform({3, 2, 3, 3}, rng, -1, 1, true)},
        [w](const auto& in) { return sum(conv2d(in[0], in[1], 1, 1) * w); }, 20, 12, 1e-5);
    CHECK(r.passed());
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("leaky_relu") {
  const Tensor x({3}, {2.0, -1.0, 0.0});
  const Tensor y = leaky_relu(x, 0.01);
  CHECK(y[0] == 2.0);
  CHECK(y[1] == doctest::Approx(-0.01).epsilon(1e-15));
  CHECK(y[2] == 0.0);
}

TEST_CASE("stop_gradient") {
  Rng rng = make_rng(5, Stream::Probe);
  Tensor x = rand_uniform({4}, rng, -1, 1, true);
  const Tensor s = stop_gradient(x);
  CHECK(vals(s) == vals(x));

  sum(square(stop_gradient(x)) * 3.0 + x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  // With only the blocked path the gradient is zero everywhere.
  Tensor y = rand_uniform({4}, rng, -1, 1, true);
  sum(exp(stop_gradient(y)) + y * 0.0).backward();
  for (double g : y.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng = make_rng(6, Stream::Probe);
  const Tensor a0 = rand_uniform({3, 3}, rng, -1, 1);
  auto l1 = [](const Tensor& a) { return sum(tanh(a) * a); };
  auto l2 = [](const Tensor& a) { return mean(exp(a)); };

  Tensor a = a0.clone().set_requires_grad(true);
  (l1(a) + l2(a)).backward();
  const auto joint = grads(a);

  Tensor b = a0.clone().set_requires_grad(true);
  l1(b).backward();
  const auto g1 = grads(b);
  b.zero_grad();
  l2(b).backward();
  const auto g2 = grads(b);
  for (std::size_t i = 0; i < joint.size(); ++i) CHECK(joint[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-14));
}

TEST_CASE("gradients accumulate until zeroed") {
  Tensor x = Tensor::full({2}, 1.5, true);
  sum(x * x).backward();
  sum(x * x).backward();
  CHECK(x.grad()[0] == 6.0);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
  // Fan-out inside one graph also accumulates.
  sum(x + x + x).backward();
  CHECK(x.grad()[0] == 3.0);
}

TEST_CASE("every reachable requires_grad tensor gets a gradient") {
  Tensor a = Tensor::full({2}, 0.5, true);
  Tensor b = Tensor::full({2}, -0.5, true);
  Tensor c = Tensor::full({2}, 2.0);
  sum(a * c + b).backward();
  CHECK(a.has_grad());
  CHECK(b.has_grad());
  CHECK(a.grad().size() == a.numel());
  CHECK_FALSE(c.has_grad());
}

TEST_CASE("only scalar-tensor broadcasting is implicit") {
  const Tensor a = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(a + Tensor::zeros({3}), ShapeError);
  CHECK_THROWS_AS(a * Tensor::zeros({1, 3}), ShapeError);
  CHECK((a + Tensor::scalar(2.0))[5] == 2.0);
  CHECK(expand(Tensor({1, 3}, {1, 2, 3}), {2, 3})[4] == 2.0);
}

TEST_CASE("shape ops") {
  const Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(vals(transpose(m)) == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(reshape(m, {3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(reshape(m, {4, 2}), ShapeError);
  const std::vector<Tensor> parts{m, Tensor({1, 3}, {7, 8, 9})};
  CHECK(vals(concat(parts, 0)) == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(vals(select(m, 1)) == std::vector<double>{4, 5, 6});
  const Tensor up = upsample_nearest2x(Tensor({1, 1, 2}, {1, 2}));
  CHECK(up.shape() == Shape{1, 2, 4});
  CHECK(vals(up) == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2});
  CHECK(vals(sum_axis(m, 0)) == std::vector<double>{5, 7, 9});
  CHECK(vals(mean_axis(m, 1)) == std::vector<double>{2, 5});
  CHECK(l2_norm(Tensor({1, 2}, {3, 4}), 1)[0] == 5.0);
  CHECK(cosine_similarity(m, m).item() == 1.0);
  CHECK(cosine_similarity(m, -m).item() == -1.0);
}

TEST_CASE("identical seeded graphs give bit-identical results") {
  auto run = [] {
    Rng rng = make_rng(42, Stream::Probe);
    Tensor x = randn({4, 4}, rng, 1.0, true);
    const Tensor k = randn({2, 1, 3, 3}, rng);
    const Tensor y = conv2d(reshape(x, {1, 4, 4}), k, 1, 1);
    const Tensor loss = mean(tanh(y)) + sum(matmul(x, transpose(x)));
    loss.backward();
    std::vector<double> out = grads(x);
    out.push_back(loss.item());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("mutation is restricted to leaves") {
  Tensor a = Tensor::full({2}, 1.0, true);
  Tensor b = a * 2.0;
  CHECK_THROWS(b.mutable_values());
  CHECK_NOTHROW(a.mutable_values());
}

TEST_CASE("the full gradient-check suite passes") {
  for (const auto& r : gradcheck_suite(7)) {
    INFO(r.name << " max_rel_error=" << r.max_rel_error << " redrawn=" << r.redrawn);
    CHECK(r.passed());
    CHECK(r.probes >= 20);
  }
}
