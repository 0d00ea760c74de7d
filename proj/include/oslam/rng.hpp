#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace oslam {

// Deterministic seeded randomness. Every consumer derives a private stream
// from (master seed, channel, counters), so adding a draw in one channel
// never perturbs another. All distributions are built from raw mt19937_64
// output; nothing implementation-defined (std::normal_distribution etc.)
// is used, which keeps streams bit-stable across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Stream for (channel, a, b, c) under a master seed.
  static Rng stream(std::uint64_t master, std::uint64_t channel,
                    std::uint64_t a = 0, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
    std::uint64_t s = splitmix64(master ^ splitmix64(channel));
    s = splitmix64(s ^ splitmix64(a + 1));
    s = splitmix64(s ^ splitmix64(b + 2));
    s = splitmix64(s ^ splitmix64(c + 3));
    return Rng(s);
  }

  // Uniform in (0, 1), never exactly 0 or 1.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return n == 0 ? 0 : engine_() % n;
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(int dim) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal();
    return v;
  }

  Eigen::Vector3d unit_vector3() {
    Eigen::Vector3d v;
    do {
      v = Eigen::Vector3d(normal(), normal(), normal());
    } while (v.norm() < 1e-12);
    return v.normalized();
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Named channels used by the simulator and pipeline.
namespace rng_channel {
constexpr std::uint64_t kWorldLayout = 1;
constexpr std::uint64_t kEmbeddings = 2;
constexpr std::uint64_t kEllipseNoise = 3;
constexpr std::uint64_t kDropout = 4;
constexpr std::uint64_t kFalsePositives = 5;
constexpr std::uint64_t kHintCorruption = 6;
constexpr std::uint64_t kOdometry = 7;
constexpr std::uint64_t kPoints = 8;
constexpr std::uint64_t kRansac = 9;
constexpr std::uint64_t kLoopMatching = 10;
}  // namespace rng_channel

}  // namespace oslam
