#include "gradmod/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "gradmod/generator.hpp"

namespace gradmod {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Ranger ? "ranger" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "ranger") return OptimizerKind::Ranger;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected ranger or adam)");
}

void OptimizerConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("optimizer.lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("optimizer.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("optimizer.beta2 must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("optimizer.eps must be positive");
  if (lookahead_k == 0) throw ConfigError("optimizer.lookahead_k must be at least 1");
  if (!(lookahead_alpha >= 0 && lookahead_alpha <= 1)) throw ConfigError("optimizer.lookahead_alpha must lie in [0, 1]");
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<Named> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  for (const auto& [name, t] : params_) {
    if (!t.defined() || !t.is_leaf() || !t.requires_grad())
      throw std::invalid_argument("optimizer parameter '" + name + "' must be a leaf that requires grad");
    exp_avg_.emplace_back(t.numel(), 0.0);
    exp_avg_sq_.emplace_back(t.numel(), 0.0);
    slow_.emplace_back(t.values().begin(), t.values().end());
  }
}

void Optimizer::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void Optimizer::step() {
  for (const auto& [name, t] : params_)
    if (!t.has_grad()) throw std::runtime_error("optimizer: parameter '" + name + "' has no gradient");

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double t = static_cast<double>(step_);
  const double bias1 = 1.0 - std::pow(b1, t);
  const double beta2_t = std::pow(b2, t);

  // RAdam step size, shared by all parameters.
  double step_size = 1.0 / bias1;
  bool rectified = true;
  if (config_.kind == OptimizerKind::Ranger) {
    const double sma_max = 2.0 / (1.0 - b2) - 1.0;
    const double sma = sma_max - 2.0 * t * beta2_t / (1.0 - beta2_t);
    last_sma_ = sma;
    rectified = sma > 4.0;
    if (rectified) {
      step_size = std::sqrt((1.0 - beta2_t) * (sma - 4.0) / (sma_max - 4.0) * (sma - 2.0) / sma * sma_max /
                            (sma_max - 2.0)) /
                  bias1;
    }
    last_rectified_ = rectified;
  }
  const double bias2 = 1.0 - beta2_t;

  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& param = params_[p].second;
    std::vector<double> grad(param.grad().begin(), param.grad().end());
    if (config_.grad_centralization && param.ndim() > 1) {
      const std::size_t rows = param.dim(0), cols = param.numel() / rows;
      for (std::size_t r = 0; r < rows; ++r) {
        double m = 0.0;
        for (std::size_t c = 0; c < cols; ++c) m += grad[r * cols + c];
        m /= static_cast<double>(cols);
        for (std::size_t c = 0; c < cols; ++c) grad[r * cols + c] -= m;
      }
    }
    auto values = param.mutable_values();
    auto& m = exp_avg_[p];
    auto& v = exp_avg_sq_[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      if (config_.kind == OptimizerKind::Adam) {
        const double denom = std::sqrt(v[i] / bias2) + config_.eps;
        values[i] -= config_.lr * (m[i] / bias1) / denom;
      } else if (rectified) {
        values[i] -= config_.lr * step_size * m[i] / (std::sqrt(v[i]) + config_.eps);
      } else {
        values[i] -= config_.lr * step_size * m[i];
      }
    }
    if (config_.kind == OptimizerKind::Ranger && step_ % config_.lookahead_k == 0) {
      const double a = config_.lookahead_alpha;
      auto& slow = slow_[p];
      for (std::size_t i = 0; i < values.size(); ++i) {
        slow[i] = (1.0 - a) * slow[i] + a * values[i];
        values[i] = slow[i];
      }
    }
  }
}

}  // namespace gradmod
