#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdiag {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using MatF = Mat<float>;
using VecD = Vec<double>;
using VecF = Vec<float>;

// Scalar used on the training path. Gradient checks and the arithmetic
// oracles instantiate the same templates with double.
using real = float;

// ---------------------------------------------------------------------------
// Error taxonomy, mapped to CLI exit codes in tools/main.cpp.

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad argument values, counts, ratios. CLI exit 2.
struct ParameterError : Error {
  using Error::Error;
};

// Malformed files, unparsable records, invalid inputs. CLI exit 3.
struct InputError : Error {
  using Error::Error;
};

// Class name outside the active vocabulary. CLI exit 3.
struct VocabularyError : Error {
  using Error::Error;
};

// Matrix dimension mismatch. CLI exit 3.
struct ShapeError : Error {
  using Error::Error;
};

// Numeric degeneracy (zero-norm rows, undefined statistics). CLI exit 4.
struct NumericError : Error {
  using Error::Error;
};

// Non-finite loss during optimization; carries the step index. CLI exit 4.
struct DivergenceError : Error {
  long long step;
  DivergenceError(const std::string& msg, long long step_index)
      : Error(msg + " (step " + std::to_string(step_index) + ")"), step(step_index) {}
};

// Attempted mutation of frozen parameters.
struct ContractError : Error {
  using Error::Error;
};

// Violation of an evaluation protocol precondition. CLI exit 2.
struct ProtocolError : Error {
  using Error::Error;
};

// Invalid or inconsistent run configuration. CLI exit 2.
struct ConfigError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Hashing.

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent stream id from a base seed and stream labels.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(seed ^ 0x6b79646961670000ull) ^ splitmix64(a) ^ (splitmix64(b) << 1));
}

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 sequence; normal deviates and shuffles are
// hand-rolled so results do not depend on the standard library implementation.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return u64() % n; }

  // Box-Muller; no cached second deviate so the call sequence is transparent.
  double normal() {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

template <class S>
Mat<S> gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.normal(0.0, stddev));
  return m;
}

}  // namespace kdiag
