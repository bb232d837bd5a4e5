#include "distest/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace distest {

std::string_view to_string(Coin coin) {
  return coin == Coin::Public ? "public" : "private";
}

Coin parse_coin(std::string_view text) {
  if (text == "public" || text == "Public") return Coin::Public;
  if (text == "private" || text == "Private") return Coin::Private;
  throw ValidationError("coin must be 'public' or 'private', got '" + std::string(text) + "'");
}

double ProblemConfig::noise_sd() const {
  return std::sqrt(static_cast<double>(m) / static_cast<double>(n));
}

double ProblemConfig::local_precision() const {
  return static_cast<double>(n) / static_cast<double>(m);
}

std::string ProblemConfig::fingerprint() const {
  std::ostringstream os;
  os << "n=" << n << ";m=" << m << ";d=" << d << ";b=" << b << ";coin=" << to_string(coin);
  return os.str();
}

void validate_config(const ProblemConfig& cfg) {
  if (cfg.n < 1) throw ValidationError("n must be >= 1");
  if (cfg.m < 1) throw ValidationError("m must be >= 1");
  if (cfg.d < 1) throw ValidationError("d must be >= 1");
  if (cfg.b < 1) throw ValidationError("b must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
}

Signal::Signal(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
  for (double c : coeffs_) {
    if (!std::isfinite(c)) throw ValidationError("signal coefficients must be finite");
  }
}

Signal Signal::zeros(int d) {
  if (d < 1) throw ValidationError("signal dimension must be >= 1");
  return Signal(std::vector<double>(static_cast<std::size_t>(d), 0.0));
}

double Signal::squared_norm() const {
  return std::inner_product(coeffs_.begin(), coeffs_.end(), coeffs_.begin(), 0.0);
}

double Signal::l2_norm() const { return std::sqrt(squared_norm()); }

bool Signal::is_zero() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(), [](double c) { return c == 0.0; });
}

Dataset::Dataset(int m, int d) : Dataset(m, d, std::vector<double>(static_cast<std::size_t>(m) * d, 0.0)) {}

Dataset::Dataset(int m, int d, std::vector<double> values) : m_(m), d_(d), values_(std::move(values)) {
  if (m < 1 || d < 1) throw ValidationError("dataset shape must be positive");
  if (values_.size() != static_cast<std::size_t>(m) * d) throw ValidationError("dataset size does not match m x d");
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("dataset entries must be finite");
  }
}

std::span<const double> Dataset::row(int j) const {
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(j) * d_, d_);
}

std::span<double> Dataset::row(int j) {
  return std::span<double>(values_).subspan(static_cast<std::size_t>(j) * d_, d_);
}

void Transcript::push_bit(bool bit) {
  const std::size_t word = bit_count_ / 64;
  if (word == words_.size()) words_.push_back(0);
  if (bit) words_[word] |= std::uint64_t{1} << (bit_count_ % 64);
  ++bit_count_;
}

void Transcript::push_uint(std::uint64_t value, int width) {
  if (width < 0 || width > 64) throw ValidationError("transcript field width must lie in [0, 64]");
  if (width < 64 && (value >> width) != 0) throw ValidationError("value does not fit in the requested width");
  for (int k = width - 1; k >= 0; --k) push_bit(((value >> k) & 1U) != 0);
}

bool Transcript::bit(std::size_t i) const {
  if (i >= bit_count_) throw std::out_of_range("transcript bit index out of range");
  return ((words_[i / 64] >> (i % 64)) & 1U) != 0;
}

std::uint64_t Transcript::read_uint(std::size_t offset, int width) const {
  std::uint64_t v = 0;
  for (int k = 0; k < width; ++k) v = (v << 1) | (bit(offset + k) ? 1U : 0U);
  return v;
}

std::uint64_t Transcript::as_key() const {
  if (bit_count_ > 64) throw ValidationError("transcript longer than 64 bits has no integer key");
  return read_uint(0, static_cast<int>(bit_count_));
}

std::string Transcript::to_string() const {
  std::string s;
  s.reserve(bit_count_);
  for (std::size_t i = 0; i < bit_count_; ++i) s.push_back(bit(i) ? '1' : '0');
  return s;
}

double RiskReport::worst_type2() const {
  double worst = 0.0;
  for (const auto& [label, value] : type2_by_alternative) worst = std::max(worst, value);
  return worst;
}

void RiskReport::finalize() {
  worst_risk = type1 + worst_type2();
  double radius = binomial_radius95(type1, reps);
  for (const auto& [label, value] : type2_by_alternative) radius = std::max(radius, binomial_radius95(value, reps));
  mc_radius = radius;
}

double binomial_radius95(double p_hat, std::int64_t reps) {
  if (reps <= 0) return 0.0;
  return 1.96 * std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(reps));
}

}  // namespace distest
