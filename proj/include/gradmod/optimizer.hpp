#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gradmod/tensor.hpp"

namespace gradmod {

enum class OptimizerKind { Ranger, Adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Ranger;
  double lr = 1e-3;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double eps = 1e-5;
  std::size_t lookahead_k = 6;
  double lookahead_alpha = 0.5;
  /// Subtract the per-slice mean from gradients of tensors with rank > 1.
  bool grad_centralization = false;

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

/// RAdam wrapped in Lookahead (or plain Adam) over a fixed set of leaf tensors.
/// Parameters are updated in place; gradients are read from each tensor's grad
/// buffer.
class Optimizer {
 public:
  using Named = std::pair<std::string, Tensor>;

  Optimizer(OptimizerConfig config, std::vector<Named> params);

  /// One update. Every registered tensor must carry a gradient.
  void step();
  /// Drops every registered gradient buffer.
  void zero_grad();

  const OptimizerConfig& config() const { return config_; }
  std::size_t step_count() const { return step_; }
  /// Approximated SMA length of the most recent step (RAdam only).
  double last_sma() const { return last_sma_; }
  /// Whether the most recent RAdam step used the variance-rectified update.
  bool last_rectified() const { return last_rectified_; }
  const std::vector<double>& slow_weights(std::size_t i) const { return slow_[i]; }
  const std::vector<Named>& params() const { return params_; }

 private:
  OptimizerConfig config_;
  std::vector<Named> params_;
  std::vector<std::vector<double>> exp_avg_;
  std::vector<std::vector<double>> exp_avg_sq_;
  std::vector<std::vector<double>> slow_;
  std::size_t step_ = 0;
  double last_sma_ = 0.0;
  bool last_rectified_ = false;
};

}  // namespace gradmod
