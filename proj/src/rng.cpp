#include "gradmod/rng.hpp"

#include <cstring>

namespace gradmod {

Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t salt) {
  const auto s = static_cast<std::uint64_t>(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(salt),
                    static_cast<std::uint32_t>(salt >> 32)};
  return Rng(seq);
}

Tensor randn(const Shape& shape, Rng& rng, double stddev, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(shape, std::move(v), requires_grad);
}

Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(shape, std::move(v), requires_grad);
}

std::uint64_t fingerprint(const Tensor& t, std::uint64_t h) {
  for (std::size_t d : t.shape()) {
    h ^= d;
    h *= 1099511628211ull;
  }
  for (double v : t.values()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace gradmod
