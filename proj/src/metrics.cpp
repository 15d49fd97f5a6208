#include "gradmod/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

namespace gradmod {

namespace {

constexpr std::array<double, 5> kScaleWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr std::size_t kMinCoarseSide = 8;

struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
  double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

std::vector<double> gaussian_window(std::size_t size) {
  std::vector<double> g(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& x : g) x /= total;
  return g;
}

// Separable 'valid' filtering.
Plane filter(const Plane& p, const std::vector<double>& g) {
  const std::size_t k = g.size();
  Plane rows{p.h, p.w - k + 1, {}};
  rows.v.assign(rows.h * rows.w, 0.0);
  for (std::size_t y = 0; y < rows.h; ++y)
    for (std::size_t x = 0; x < rows.w; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * p.at(y, x + i);
      rows.v[y * rows.w + x] = s;
    }
  Plane out{p.h - k + 1, rows.w, {}};
  out.v.assign(out.h * out.w, 0.0);
  for (std::size_t y = 0; y < out.h; ++y)
    for (std::size_t x = 0; x < out.w; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * rows.at(y + i, x);
      out.v[y * out.w + x] = s;
    }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.h, a.w, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

Plane downsample(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(out.h * out.w);
  for (std::size_t y = 0; y < out.h; ++y)
    for (std::size_t x = 0; x < out.w; ++x)
      out.v[y * out.w + x] = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                                     p.at(2 * y + 1, 2 * x + 1));
  return out;
}

// Mean SSIM and mean contrast-structure term of one channel at one scale.
std::pair<double, double> ssim_cs(const Plane& a, const Plane& b) {
  const auto g = gaussian_window(std::min({kWindow, a.h, a.w}));
  const Plane mu_a = filter(a, g), mu_b = filter(b, g);
  const Plane aa = filter(product(a, a), g), bb = filter(product(b, b), g), ab = filter(product(a, b), g);
  double ssim = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = aa.v[i] - ma * ma, vb = bb.v[i] - mb * mb, cov = ab.v[i] - ma * mb;
    const double c = (2.0 * cov + kC2) / (va + vb + kC2);
    const double l = (2.0 * (ma * mb) + kC1) / (ma * ma + mb * mb + kC1);
    ssim += l * c;
    cs += c;
  }
  const double n = static_cast<double>(mu_a.v.size());
  return {ssim / n, cs / n};
}

}  // namespace

std::size_t effective_scales(std::size_t side, std::size_t requested) {
  std::size_t n = std::clamp<std::size_t>(requested, 1, kScaleWeights.size());
  while (n > 1 && (side >> (n - 1)) < kMinCoarseSide) --n;
  return n;
}

double ms_ssim(const Tensor& a, const Tensor& b, std::size_t n_scales) {
  if (a.shape() != b.shape() || a.ndim() != 3)
    throw ShapeError("ms_ssim: image shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  const std::size_t n = effective_scales(std::min(h, w), n_scales);
  double weight_total = 0.0;
  for (std::size_t j = 0; j < n; ++j) weight_total += kScaleWeights[j];

  std::vector<Plane> pa(c), pb(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    pa[ch] = {h, w, std::vector<double>(h * w)};
    pb[ch] = {h, w, std::vector<double>(h * w)};
    for (std::size_t i = 0; i < h * w; ++i) {
      pa[ch].v[i] = (a[ch * h * w + i] + 1.0) * 0.5;
      pb[ch].v[i] = (b[ch * h * w + i] + 1.0) * 0.5;
    }
  }
  double result = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    double ssim = 0.0, cs = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto [s, k] = ssim_cs(pa[ch], pb[ch]);
      ssim += s;
      cs += k;
    }
    const double term = (j + 1 == n ? ssim : cs) / static_cast<double>(c);
    result *= std::pow(std::max(term, 0.0), kScaleWeights[j] / weight_total);
    if (j + 1 < n)
      for (std::size_t ch = 0; ch < c; ++ch) {
        pa[ch] = downsample(pa[ch]);
        pb[ch] = downsample(pb[ch]);
      }
  }
  return result;
}

double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

MetricReport evaluate(const Tensor& target, const Tensor& reconstruction, const Extractors& fx) {
  if (target.shape() != reconstruction.shape())
    throw ShapeError("evaluate: shapes " + shape_str(target.shape()) + " and " + shape_str(reconstruction.shape()));
  if (!fx.perceptual || !fx.identity) throw ConfigError("evaluate needs the perceptual and identity extractors");
  const Tensor a = stop_gradient(target), b = stop_gradient(reconstruction);
  MetricReport r;
  r.l2 = mse(a, b);
  r.ms_ssim = ms_ssim(a, b);
  r.lpips_proxy = perceptual_loss(a, b, *fx.perceptual).item();
  r.id_proxy = cosine_similarity(fx.identity->embedding(a), fx.identity->embedding(b)).item();
  return r;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_metric_row(const MetricRow& row) {
  std::string s = row.run_id + "," + row.arm + "," + std::to_string(row.seed) + "," + std::to_string(row.iteration) +
                  "," + format_double(row.report.l2) + "," + format_double(row.report.ms_ssim) + "," +
                  format_double(row.report.lpips_proxy) + "," + format_double(row.report.id_proxy) + ",";
  if (!std::isnan(row.locality_score)) s += format_double(row.locality_score);
  return s;
}

}  // namespace gradmod
