#pragma once

// Core domain types shared by every protocol, harness and diagnostic.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace distest {

/// Raised when a configuration or argument violates a documented invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an experiment is well formed but cannot be carried out
/// (for example the communication budget is too small for a schedule).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Coin { Private, Public };

std::string_view to_string(Coin coin);
Coin parse_coin(std::string_view text);

/// One finite-dimensional distributed testing instance.
///
/// `n` is the total signal-to-noise ratio, so every machine observes its
/// signal with noise standard deviation sqrt(m / n).
struct ProblemConfig {
  std::int64_t n = 1;
  int m = 1;
  int d = 1;
  int b = 1;
  double alpha = 0.05;
  Coin coin = Coin::Private;

  double noise_sd() const;
  /// n / m, the per-machine precision.
  double local_precision() const;
  /// Stable text key used by threshold tables.
  std::string fingerprint() const;

  friend bool operator==(const ProblemConfig&, const ProblemConfig&) = default;
};

void validate_config(const ProblemConfig& cfg);

/// Dense real signal vector.
class Signal {
 public:
  Signal() = default;
  explicit Signal(std::vector<double> coeffs);
  static Signal zeros(int d);

  int size() const { return static_cast<int>(coeffs_.size()); }
  std::span<const double> coeffs() const { return coeffs_; }
  double operator[](std::size_t i) const { return coeffs_[i]; }
  double squared_norm() const;
  double l2_norm() const;
  bool is_zero() const;

 private:
  std::vector<double> coeffs_;
};

/// m x d matrix of local observations, row j is machine j's observation.
class Dataset {
 public:
  Dataset(int m, int d);
  Dataset(int m, int d, std::vector<double> values);

  int machines() const { return m_; }
  int dim() const { return d_; }
  std::span<const double> row(int j) const;
  std::span<double> row(int j);
  std::span<const double> values() const { return values_; }

 private:
  int m_;
  int d_;
  std::vector<double> values_;
};

/// Bit string with exact length accounting.
class Transcript {
 public:
  Transcript() = default;

  void push_bit(bool bit);
  /// Appends the low `width` bits of `value`, most significant first.
  void push_uint(std::uint64_t value, int width);

  std::size_t bit_count() const { return bit_count_; }
  bool bit(std::size_t i) const;
  std::uint64_t read_uint(std::size_t offset, int width) const;
  /// Integer value of the whole payload; only valid for bit_count() <= 64.
  std::uint64_t as_key() const;
  std::string to_string() const;

  friend bool operator==(const Transcript&, const Transcript&) = default;

 private:
  std::vector<std::uint64_t> words_;
  std::size_t bit_count_ = 0;
};

/// Monte Carlo estimate of the testing risk: Type I error plus the worst
/// Type II error over a family of alternatives.
struct RiskReport {
  double type1 = 0.0;
  std::map<std::string, double> type2_by_alternative;
  double worst_risk = 0.0;
  double mc_radius = 0.0;
  std::int64_t reps = 0;
  /// Largest transcript length seen in any machine of any replication.
  std::int64_t max_transcript_bits = 0;

  double worst_type2() const;
  /// Fills worst_risk and mc_radius from type1 / type2_by_alternative / reps.
  void finalize();
};

/// Half-width of the normal-approximation 95% binomial interval.
double binomial_radius95(double p_hat, std::int64_t reps);

}  // namespace distest
