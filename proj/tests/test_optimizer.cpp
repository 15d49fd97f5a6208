#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gradmod/generator.hpp"
#include "gradmod/optimizer.hpp"
#include "gradmod/rng.hpp"
#include "reference_ranger.hpp"

using namespace gradmod;
using gradmod::testing::Quadratic;
using gradmod::testing::ReferenceRanger;

namespace {

void set_grad(Tensor& p, const std::valarray<double>& g) {
  p.zero_grad();
  Tensor coeff(p.shape(), std::vector<double>(std::begin(g), std::end(g)));
  sum(p * coeff).backward();
}

std::valarray<double> as_valarray(std::span<const double> s) { return std::valarray<double>(s.data(), s.size()); }

}  // namespace

TEST_CASE("ranger matches the reference trajectory") {
  const Quadratic q(5, 1);
  for (const auto& [k, alpha] : std::vector<std::pair<std::size_t, double>>{{6, 0.5}, {3, 0.8}, {1, 1.0}}) {
    OptimizerConfig cfg;
    cfg.lr = 0.05;
    cfg.lookahead_k = k;
    cfg.lookahead_alpha = alpha;
    Rng rng = make_rng(2, Stream::Probe);
    Tensor p = randn({5}, rng, 1.0, true);
    ReferenceRanger ref(cfg, as_valarray(p.values()));
    Optimizer opt(cfg, {{"p", p}});
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      const auto g = q.grad(p.values());
      set_grad(p, g);
      opt.step();
      ref.step(g);
      for (std::size_t i = 0; i < 5; ++i) worst = std::max(worst, std::abs(p[i] - ref.x[i]));
    }
    INFO("k=" << k << " alpha=" << alpha);
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("lookahead with k=1 and alpha=1 is plain RAdam") {
  const Quadratic q(4, 3);
  OptimizerConfig cfg;
  cfg.lr = 0.02;
  cfg.lookahead_k = 1;
  cfg.lookahead_alpha = 1.0;
  Rng rng = make_rng(4, Stream::Probe);
  Tensor p = randn({4}, rng, 1.0, true);
  ReferenceRanger radam(cfg, as_valarray(p.values()));
  radam.lookahead = false;
  Optimizer opt(cfg, {{"p", p}});
  for (int s = 0; s < 50; ++s) {
    const auto g = q.grad(p.values());
    set_grad(p, g);
    opt.step();
    radam.step(g);
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(std::abs(p[i] - radam.x[i]) < 1e-12);
  }
}

TEST_CASE("k=1, alpha=1 is bit-identical to a run whose lookahead never fires") {
  const Quadratic q(4, 3);
  OptimizerConfig cfg;
  cfg.lr = 0.02;
  cfg.lookahead_k = 1;
  cfg.lookahead_alpha = 1.0;
  OptimizerConfig never = cfg;
  never.lookahead_k = 1000;
  Tensor a = Tensor({4}, {0.3, -0.7, 1.1, 2.0}, true), b = a.clone().set_requires_grad(true);
  Optimizer oa(cfg, {{"a", a}}), ob(never, {{"b", b}});
  for (int s = 0; s < 50; ++s) {
    set_grad(a, q.grad(a.values()));
    set_grad(b, q.grad(b.values()));
    oa.step();
    ob.step();
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(a[i] == b[i]);
  }
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  for (OptimizerKind kind : {OptimizerKind::Ranger, OptimizerKind::Adam}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    Rng rng = make_rng(5, Stream::Probe);
    Tensor p = randn({3, 2}, rng, 1.0, true);
    const std::vector<double> before(p.values().begin(), p.values().end());
    Optimizer opt(cfg, {{"p", p}});
    for (int s = 0; s < 12; ++s) {
      set_grad(p, std::valarray<double>(0.0, 6));
      opt.step();
    }
    CHECK(std::vector<double>(p.values().begin(), p.values().end()) == before);
  }
}

TEST_CASE("scalar quadratic descends") {
  OptimizerConfig cfg;  // lr 1e-3
  Tensor x = Tensor({1}, {1.0}, true);
  Optimizer opt(cfg, {{"x", x}});
  double prev = 1.0, prev_slow = 1.0;
  for (std::size_t s = 1; s <= 200; ++s) {
    set_grad(x, std::valarray<double>{2.0 * x[0]});
    opt.step();
    const double f = x[0] * x[0];
    if (s % cfg.lookahead_k == 0) {
      // Synchronisation pulls the fast weight back to the slow one, which
      // must itself keep descending.
      CHECK(opt.slow_weights(0)[0] * opt.slow_weights(0)[0] < prev_slow);
      prev_slow = opt.slow_weights(0)[0] * opt.slow_weights(0)[0];
    } else if (s > 5) {
      CHECK(f < prev);
    }
    prev = f;
  }
  CHECK(x[0] * x[0] < 1.0);
}

TEST_CASE("rectification switches on once the SMA length exceeds 4") {
  OptimizerConfig cfg;
  Tensor x = Tensor({2}, {1.0, -1.0}, true);
  Optimizer opt(cfg, {{"x", x}});
  std::vector<bool> rectified;
  for (int s = 0; s < 10; ++s) {
    set_grad(x, std::valarray<double>{0.3, -0.1});
    opt.step();
    CHECK(opt.last_rectified() == (opt.last_sma() > 4.0));
    rectified.push_back(opt.last_rectified());
  }
  // beta2 = 0.999: the SMA length is 3.997 at step 4 and 4.996 at step 5.
  CHECK_FALSE(rectified[0]);
  CHECK_FALSE(rectified[3]);
  CHECK(rectified[4]);
  CHECK(rectified[9]);
  CHECK(opt.step_count() == 10);
}

TEST_CASE("alpha zero freezes the slow weights") {
  OptimizerConfig cfg;
  cfg.lookahead_alpha = 0.0;
  cfg.lookahead_k = 2;
  cfg.lr = 0.1;
  Tensor x = Tensor({3}, {0.5, 1.0, -2.0}, true);
  Optimizer opt(cfg, {{"x", x}});
  for (int s = 0; s < 20; ++s) {
    set_grad(x, std::valarray<double>{1.0, -0.5, 0.25});
    opt.step();
    CHECK(opt.slow_weights(0) == std::vector<double>{0.5, 1.0, -2.0});
  }
  CHECK(x[0] == 0.5);  // every second step resets the fast weights
}

TEST_CASE("determinism and errors") {
  const Quadratic q(3, 7);
  auto run = [&] {
    Tensor p = Tensor({3}, {0.1, 0.2, 0.3}, true);
    Optimizer opt(OptimizerConfig{}, {{"p", p}});
    for (int s = 0; s < 30; ++s) {
      set_grad(p, q.grad(p.values()));
      opt.step();
    }
    return std::vector<double>(p.values().begin(), p.values().end());
  };
  CHECK(run() == run());

  Tensor a = Tensor({2}, {1.0, 2.0}, true), b = Tensor({2}, {1.0, 2.0}, true);
  Optimizer opt(OptimizerConfig{}, {{"a", a}, {"b", b}});
  set_grad(a, std::valarray<double>{1.0, 1.0});
  try {
    opt.step();
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK_THROWS(Optimizer(OptimizerConfig{}, {{"c", Tensor({1}, {1.0})}}));
  OptimizerConfig bad;
  bad.lookahead_k = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
