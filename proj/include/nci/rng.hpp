#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace nci {

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Folds a list of identifiers into one seed. Order matters.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t s = splitmix64(master);
  for (auto id : ids) s = splitmix64(s ^ splitmix64(id + 0x632BE59BD9B4E019ULL));
  return s;
}

// Stream identifiers. Training, validation, calibration and test data never
// share a stream, so held-out evaluation cannot see training samples.
namespace streams {
inline constexpr std::uint64_t kTrain = 0x7472'6169'6eULL;
inline constexpr std::uint64_t kValidation = 0x7661'6c69'64ULL;
inline constexpr std::uint64_t kCalibration = 0x6361'6c69'62ULL;
inline constexpr std::uint64_t kTest = 0x7465'7374ULL;
inline constexpr std::uint64_t kInit = 0x696e'6974ULL;
inline constexpr std::uint64_t kRun = 0x7275'6eULL;
inline constexpr std::uint64_t kLabels = 0x6c61'6265'6cULL;
inline constexpr std::uint64_t kObservations = 0x6f62'73ULL;
}  // namespace streams

/// Thin wrapper over mt19937_64 with the handful of draws the generators need.
/// Normal and uniform draws are implemented here (not via <random>
/// distributions) so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in the closed range [lo, hi].
  long integer(long lo, long hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(engine_() % span);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Gamma(shape, 1) via Marsaglia-Tsang; shape >= 1 only (Dirichlet(1,..)).
  double gamma1(double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace nci
