#pragma once

// Monte Carlo estimates of the conditional-mean matrix
//   Xi = sum_y P0(Y = y) E0[X | Y = y] E0[X | Y = y]^T
// for single-machine encoders, and checks of the trace and spectral bounds
// it must satisfy.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "distest/model.hpp"
#include "distest/randomness.hpp"

namespace distest {

enum class KernelKind { Constant, Sign, T1, T2, T32, Quantizer };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel(std::string_view text);

/// Largest transcript length the diagnostic will enumerate.
inline constexpr int kMaxDiagnosticBits = 16;

/// A fixed encoder X -> Y with an enumerable alphabet. Public-coin kernels
/// draw their coin once at construction.
class EncodeKernel {
 public:
  /// `bits_per_coord` only matters for the quantizer (0 = max(1, b / d)).
  EncodeKernel(KernelKind kind, const ProblemConfig& cfg, const SeedNode& coin, int bits_per_coord = 0);

  KernelKind kind() const { return kind_; }
  std::string label() const;
  /// Bits actually used, <= cfg.b.
  int bits() const { return bits_; }
  bool applicable() const { return applicable_; }

  std::uint64_t encode(std::span<const double> x, RandomStream& rng) const;

 private:
  KernelKind kind_;
  ProblemConfig cfg_;
  int bits_ = 0;
  bool applicable_ = true;
  int coords_ = 0;
  int bits_per_coord_ = 0;
  std::int64_t multiplicity_ = 0;
  Eigen::MatrixXd frame_;
  std::vector<double> edges_;
};

/// Every kernel that fits (d, b), with the quantizer at its default refinement.
std::vector<EncodeKernel> standard_kernels(const ProblemConfig& cfg, const SeedNode& coin);

struct XiEstimate {
  Eigen::MatrixXd per_machine;  ///< Xi^j
  Eigen::MatrixXd matrix;       ///< m * Xi^j
  double trace = 0.0;           ///< Tr(matrix)
  double per_machine_trace = 0.0;
  double lambda_max = 0.0;  ///< of per_machine
  double trace_se = 0.0;    ///< batch-means standard error of per_machine_trace
  double lambda_se = 0.0;
  std::int64_t mc_samples = 0;
  std::int64_t groups_observed = 0;
  std::int64_t alphabet_size = 0;
  std::string kernel;
};

/// Samples X ~ N(0, (m/n) I_d) in `batches` independent batches.
XiEstimate estimate_xi(const EncodeKernel& kernel, const ProblemConfig& cfg, std::int64_t mc_samples,
                       const SeedNode& seed, int batches = 20, int threads = 0);

struct DpiReport {
  std::string kernel;
  double trace = 0.0;
  double trace_bound = 0.0;  ///< min(2 ln2 b / d, 1) m^2 d / n
  double trace_slack = 0.0;
  double lambda_max = 0.0;
  double lambda_bound = 0.0;  ///< m / n
  double lambda_slack = 0.0;
  double per_machine_trace = 0.0;
  double per_machine_trace_bound = 0.0;  ///< 2 ln2 (m/n) b
  bool trace_ok = false;
  bool lambda_ok = false;
  bool per_machine_ok = false;

  bool ok() const { return trace_ok && lambda_ok && per_machine_ok; }
  double trace_margin() const { return trace_bound + trace_slack - trace; }
  double lambda_margin() const { return lambda_bound + lambda_slack - lambda_max; }
};

/// Bounds with `sigmas` batch-means standard errors of slack.
DpiReport check_dpi(const XiEstimate& est, const ProblemConfig& cfg, double sigmas = 5.0);

}  // namespace distest
