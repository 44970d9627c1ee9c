#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace segcl {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic random stream. All randomness in the project flows through
/// named streams derived from one root seed, so every operation is a pure
/// function of (inputs, seed). Distributions are implemented by hand on top
/// of mt19937_64 rather than <random> distributions, whose output is
/// implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream keyed by (seed, tag, index).
  static RngStream derive(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t s = seed ^ detail::fnv1a(tag);
    std::uint64_t mixed = detail::splitmix64(s);
    s ^= index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
    mixed ^= detail::splitmix64(s);
    return RngStream(mixed);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi), unbiased (rejection sampling).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo);
    if (range == 0) return lo;
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % range;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % range);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller. Stateless (no cached spare) so the
  /// stream state is fully captured by the engine.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  static RngStream deserialize(const std::string& text) {
    RngStream s(0);
    std::istringstream is(text);
    is >> s.engine_;
    return s;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace segcl
