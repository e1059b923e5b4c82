#pragma once

#include <chrono>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace tradeclust {

using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data could not be parsed or violates a data invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A parameter is outside the domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Half-open time interval [begin, end).
struct Interval {
  Timestamp begin;
  Timestamp end;

  bool contains(Timestamp t) const { return begin <= t && t < end; }
  Seconds length() const { return end - begin; }
  bool operator==(const Interval&) const = default;
};

/// Seeded generator with platform-independent derived draws.
///
/// The standard distributions are implementation defined, so uniform and
/// bounded draws are derived from the raw 64-bit engine output here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw DomainError("Rng::below: bound must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller.
  double normal();

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::string format_timestamp(Timestamp t);

/// Parses `YYYY-MM-DDTHH:MM:SSZ`; throws DataError on anything else.
Timestamp parse_timestamp(const std::string& text);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace tradeclust
