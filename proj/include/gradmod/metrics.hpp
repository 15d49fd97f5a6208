#pragma once

#include <cstdint>
#include <ostream>
#include <string>

#include "gradmod/losses.hpp"
#include "gradmod/tensor.hpp"

namespace gradmod {

/// Multi-scale SSIM between two RGB images with values in [-1, 1], computed on
/// [0, 1]-rescaled copies with an 11-tap Gaussian window (sigma 1.5). Scales
/// are dropped until the coarsest one is at least 8 pixels on a side; the
/// window is truncated to the image when the image is smaller than it.
double ms_ssim(const Tensor& a, const Tensor& b, std::size_t n_scales = 3);

/// Number of scales ms_ssim actually uses for a side length.
std::size_t effective_scales(std::size_t side, std::size_t requested);

/// Mean squared pixel error.
double mse(const Tensor& a, const Tensor& b);

struct MetricReport {
  double l2 = 0.0;
  double ms_ssim = 1.0;
  double lpips_proxy = 0.0;
  double id_proxy = 1.0;
};

MetricReport evaluate(const Tensor& target, const Tensor& reconstruction, const Extractors& fx);

/// Row of the metrics CSV:
/// run_id,arm,seed,iteration,l2,ms_ssim,lpips_proxy,id_proxy,locality_score
struct MetricRow {
  std::string run_id;
  std::string arm;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  MetricReport report;
  /// NaN when not measured at this iteration; written as an empty field.
  double locality_score = 0.0;
};

inline constexpr const char* kMetricsCsvHeader =
    "run_id,arm,seed,iteration,l2,ms_ssim,lpips_proxy,id_proxy,locality_score";

std::string format_metric_row(const MetricRow& row);

/// Round-trip decimal form of a double ("%.17g").
std::string format_double(double v);

}  // namespace gradmod
