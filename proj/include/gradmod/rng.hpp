#pragma once

#include <cstdint>
#include <random>

#include "gradmod/tensor.hpp"

namespace gradmod {

using Rng = std::mt19937_64;

/// Independent random streams. Every consumer of randomness draws from its own
/// stream so that, e.g., evaluation latents never coincide with training ones.
enum class Stream : std::uint64_t {
  GeneratorInit = 1,
  Target = 2,
  InitPerturbation = 3,
  Noise = 4,
  Localization = 5,
  Evaluation = 6,
  Extractors = 7,
  GmmInit = 8,
  Directions = 9,
  Probe = 10,
  Mapping = 11,
};

Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t salt = 0);

Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi, bool requires_grad = false);

/// FNV-1a over the raw bytes of the values; used for frozen-state checks.
std::uint64_t fingerprint(const Tensor& t, std::uint64_t h = 14695981039346656037ull);

}  // namespace gradmod
