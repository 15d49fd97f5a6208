#pragma once

#include <cmath>
#include <span>
#include <valarray>
#include <vector>

#include "gradmod/optimizer.hpp"
#include "gradmod/rng.hpp"

namespace gradmod::testing {

// Straight transcription of RAdam (denominator sqrt(v) + eps, bias corrections
// folded into the step size) followed by Lookahead, written with valarrays so
// it shares nothing with the library loop.
struct ReferenceRanger {
  double lr, b1, b2, eps;
  std::size_t k;
  double alpha;
  bool lookahead = true;
  std::valarray<double> x, m, v, slow;
  int t = 0;

  ReferenceRanger(const OptimizerConfig& c, std::valarray<double> x0)
      : lr(c.lr), b1(c.beta1), b2(c.beta2), eps(c.eps), k(c.lookahead_k), alpha(c.lookahead_alpha), x(x0),
        m(0.0, x0.size()), v(0.0, x0.size()), slow(x0) {}

  void step(const std::valarray<double>& g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double rho_inf = 2 / (1 - b2) - 1;
    const double b2t = std::pow(b2, t);
    const double rho = rho_inf - 2 * t * b2t / (1 - b2t);
    const double mhat_scale = 1 / (1 - std::pow(b1, t));
    if (rho > 4) {
      const double r = std::sqrt((rho - 4) * (rho - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho));
      x -= lr * r * std::sqrt(1 - b2t) * mhat_scale * m / (std::sqrt(v) + eps);
    } else {
      x -= lr * mhat_scale * m;
    }
    if (lookahead && t % static_cast<int>(k) == 0) {
      slow += alpha * (x - slow);
      x = slow;
    }
  }
};

// Gradient of 0.5 x^T A x - c^T x with a fixed SPD A.
struct Quadratic {
  std::size_t n;
  std::vector<double> a, c;
  Quadratic(std::size_t n_, std::uint64_t seed) : n(n_), a(n_ * n_), c(n_) {
    Rng rng = make_rng(seed, Stream::Probe);
    const Tensor b = randn({n, n}, rng), cc = randn({n}, rng);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = i == j ? 0.5 : 0.0;
        for (std::size_t l = 0; l < n; ++l) s += b[i * n + l] * b[j * n + l] / static_cast<double>(n);
        a[i * n + j] = s;
      }
    for (std::size_t i = 0; i < n; ++i) c[i] = cc[i];
  }
  std::valarray<double> grad(std::span<const double> x) const {
    std::valarray<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = -c[i];
      for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * x[j];
      g[i] = s;
    }
    return g;
  }
};

}  // namespace gradmod::testing
