#pragma once

// Deterministic, order-independent randomness.
//
// Every random quantity in the library is drawn from a stream that is a pure
// function of (master seed, derivation path). Paths are hashed rather than
// split sequentially, so replication r / machine j always sees the same
// stream no matter which worker thread gets to it first.

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string_view>

#include "distest/model.hpp"

namespace distest {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// xoshiro256** seeded through splitmix64. Satisfies UniformRandomBitGenerator.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  /// Gamma(shape, scale = 1).
  double gamma(double shape);
  /// Chi-square with `df` degrees of freedom (df may be fractional, df > 0).
  double chi_square(double df);
  std::int64_t binomial(std::int64_t trials, double p);

 private:
  std::uint64_t s_[4];
  std::normal_distribution<double> normal_;
};

/// A node in the seed derivation tree.
class SeedNode {
 public:
  explicit SeedNode(std::uint64_t master_seed);

  SeedNode child(std::string_view label, std::uint64_t index = 0) const;
  RandomStream stream() const { return RandomStream(key_); }

  std::uint64_t master_seed() const { return master_; }
  std::uint64_t key() const { return key_; }

  friend bool operator==(const SeedNode&, const SeedNode&) = default;

 private:
  SeedNode(std::uint64_t master, std::uint64_t key) : master_(master), key_(key) {}

  std::uint64_t master_;
  std::uint64_t key_;
};

/// Returns 1 with probability p. Throws ValidationError when p is outside [0,1].
bool bernoulli(double p, RandomStream& rng);
bool bernoulli(double p, const SeedNode& node);

/// Row j = f + sqrt(m/n) Z^j, with Z^j drawn from node.child("machine", j).
Dataset sample_observations(const ProblemConfig& cfg, const Signal& f, const SeedNode& node);
/// Fills `out` with f + sigma * Z using the given stream.
void sample_noisy_row(std::span<const double> f, double sigma, RandomStream& rng, std::span<double> out);

/// d x d orthogonal matrix.
class OrthogonalMatrix {
 public:
  explicit OrthogonalMatrix(Eigen::MatrixXd entries);

  int dim() const { return static_cast<int>(entries_.rows()); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  /// Largest absolute entry of U^T U - I.
  double orthogonality_error() const;

 private:
  Eigen::MatrixXd entries_;
};

/// Haar-distributed rotation: QR of a Gaussian matrix with the columns of Q
/// multiplied by the signs of diag(R).
OrthogonalMatrix haar_rotation(int d, const SeedNode& node);

/// k x d matrix with orthonormal rows, distributed as k rows of a Haar
/// rotation. Row i equals column i of haar_rotation(d, node) for the same
/// node, and costs O(d k^2) instead of O(d^3).
Eigen::MatrixXd haar_frame(int k, int d, const SeedNode& node);

}  // namespace distest
