#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace avail {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// All randomness flows through explicitly seeded engines. The helpers below
/// are stateless given the engine, so serializing the engine captures the
/// full sampling state (std::*_distribution objects are avoided on purpose).
using Rng = std::mt19937_64;

/// Uniform in [0, 1).
double uniform_double(Rng& rng);

/// Uniform in [lo, hi).
double uniform_range(Rng& rng, double lo, double hi);

/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Standard normal via Box-Muller (no cached spare).
double normal_sample(Rng& rng);

/// Gamma(shape, 1) via Marsaglia-Tsang, valid for any shape > 0.
double gamma_sample(Rng& rng, double shape);

/// Beta(a, b).
double beta_sample(Rng& rng, double a, double b);

/// splitmix64-style mixing for deriving independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

std::string rng_to_string(const Rng& rng);
Rng rng_from_string(const std::string& text);

}  // namespace avail
