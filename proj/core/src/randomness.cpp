#include "distest/randomness.hpp"

#include <cmath>
#include <string>

namespace distest {

namespace {

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Gaussian d x k matrix, column-major draw order so that the first k columns
// of a d x d draw coincide with a d x k draw from the same stream.
Eigen::MatrixXd gaussian_matrix(int d, int k, RandomStream& rng) {
  Eigen::MatrixXd g(d, k);
  for (int c = 0; c < k; ++c)
    for (int r = 0; r < d; ++r) g(r, c) = rng.normal();
  return g;
}

Eigen::MatrixXd sign_corrected_q(const Eigen::MatrixXd& g) {
  const Eigen::Index d = g.rows();
  const Eigen::Index k = g.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
  const auto& packed = qr.matrixQR();
  for (Eigen::Index c = 0; c < k; ++c) {
    if (packed(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) {
    x += 0x9E3779B97F4A7C15ULL;
    s = mix64(x);
  }
}

RandomStream::result_type RandomStream::operator()() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RandomStream::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double RandomStream::normal() { return normal_(*this); }

double RandomStream::gamma(double shape) {
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(*this);
}

double RandomStream::chi_square(double df) { return 2.0 * gamma(0.5 * df); }

std::int64_t RandomStream::binomial(std::int64_t trials, double p) {
  if (trials <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  std::binomial_distribution<std::int64_t> dist(trials, p);
  return dist(*this);
}

SeedNode::SeedNode(std::uint64_t master_seed) : master_(master_seed), key_(mix64(master_seed)) {}

SeedNode SeedNode::child(std::string_view label, std::uint64_t index) const {
  const std::uint64_t h = mix64(key_ ^ hash_label(label));
  return SeedNode(master_, mix64(h + 0xD1B54A32D192ED03ULL * (index + 1)));
}

bool bernoulli(double p, RandomStream& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("bernoulli probability must lie in [0,1]");
  return rng.uniform() < p;
}

bool bernoulli(double p, const SeedNode& node) {
  auto rng = node.stream();
  return bernoulli(p, rng);
}

void sample_noisy_row(std::span<const double> f, double sigma, RandomStream& rng, std::span<double> out) {
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] + sigma * rng.normal();
}

Dataset sample_observations(const ProblemConfig& cfg, const Signal& f, const SeedNode& node) {
  validate_config(cfg);
  if (f.size() != cfg.d) {
    throw ValidationError("signal length " + std::to_string(f.size()) + " does not match d = " + std::to_string(cfg.d));
  }
  Dataset data(cfg.m, cfg.d);
  const double sigma = cfg.noise_sd();
  for (int j = 0; j < cfg.m; ++j) {
    auto rng = node.child("machine", static_cast<std::uint64_t>(j)).stream();
    sample_noisy_row(f.coeffs(), sigma, rng, data.row(j));
  }
  return data;
}

OrthogonalMatrix::OrthogonalMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() < 1) {
    throw ValidationError("orthogonal matrix must be square and non-empty");
  }
}

double OrthogonalMatrix::orthogonality_error() const {
  const Eigen::MatrixXd gram = entries_.transpose() * entries_;
  return (gram - Eigen::MatrixXd::Identity(dim(), dim())).cwiseAbs().maxCoeff();
}

OrthogonalMatrix haar_rotation(int d, const SeedNode& node) {
  if (d < 1) throw ValidationError("rotation dimension must be >= 1");
  auto rng = node.stream();
  return OrthogonalMatrix(sign_corrected_q(gaussian_matrix(d, d, rng)));
}

Eigen::MatrixXd haar_frame(int k, int d, const SeedNode& node) {
  if (d < 1 || k < 1 || k > d) throw ValidationError("haar frame requires 1 <= k <= d");
  auto rng = node.stream();
  return sign_corrected_q(gaussian_matrix(d, k, rng)).transpose();
}

}  // namespace distest
