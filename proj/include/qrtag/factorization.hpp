#pragma once

// Weighted rank-1 factorization of a projected outer product.
//
// Stage one relaxes the binary constraint and runs multiplicative updates on
// nonnegative factors. Stage two binarizes them: for an increasing sequence
// of sigmoid steepnesses it searches the pair of thresholds that minimizes the
// weighted residual of the sigmoid-squashed factors, then hard-thresholds.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qrtag/marker_model.hpp"

namespace qrtag {

/// Linear map of the outer product w h^T onto a vector of observations:
///   out[v] = coef[v] * sum over (p, q) in terms(v) of w[p] * h[q]
/// Every coefficient is nonnegative, which keeps multiplicative updates
/// sign-preserving.
class ProjectionOperator {
 public:
  struct Term {
    std::uint32_t p;  // index into w
    std::uint32_t q;  // index into h
  };

  ProjectionOperator(std::size_t m, std::size_t n, std::vector<std::vector<Term>> terms,
                     std::vector<double> coefs);

  /// Every entry of the m x n outer product is observed once.
  static ProjectionOperator identity(std::size_t m, std::size_t n);

  /// One observation per view: the block average over the cell's window of
  /// the front window circularly shifted by the view offset, times the rear
  /// window. `w` is the front window and `h` the rear window, row-major.
  static ProjectionOperator cell_views(const CellSpec& cell, const ViewSpec& view);

  std::size_t m() const { return m_; }
  std::size_t n() const { return n_; }
  std::size_t outputs() const { return coefs_.size(); }

  std::vector<double> forward(std::span<const double> w, std::span<const double> h) const;
  /// (B^T y) h, length m.
  std::vector<double> adjoint_times_h(std::span<const double> y, std::span<const double> h) const;
  /// w^T (B^T y), length n.
  std::vector<double> adjoint_times_w(std::span<const double> y, std::span<const double> w) const;

 private:
  std::size_t m_;
  std::size_t n_;
  std::vector<std::size_t> row_start_;
  std::vector<Term> terms_;
  std::vector<double> coefs_;
};

/// Target observations, their weights C and the operator B.
struct FactorProblem {
  std::vector<double> target;
  std::vector<double> weights;
  ProjectionOperator op;

  FactorProblem(std::vector<double> target, std::vector<double> weights, ProjectionOperator op);
  void validate() const;
};

struct WnmfConfig {
  double lambda1 = 1e-4;
  double lambda2 = 1e-4;
  int max_iters = 2000;
  double tol = 1e-7;
  int window = 5;  // iterations over which the relative change is measured
  double epsilon = 1e-12;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class AnnealMode {
  chained,   // squash the previous round's output
  original,  // squash the relaxed factors afresh each round
};

struct AnnealSchedule {
  std::vector<double> a_values{5, 10, 20, 40, 80, 160};
  int inner_max_iters = 200;
  double learn_rate = 0.05;
  /// First-round thresholds; when unset each round starts from the factor means.
  std::optional<std::pair<double, double>> thresh_init;
  AnnealMode mode = AnnealMode::chained;

  void validate() const;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 0.5 * sum C_v^2 (V_v - B(w h)_v)^2 + lambda1 |w|^2 + lambda2 |h|^2
double factor_objective(const FactorProblem& problem, std::span<const double> w,
                        std::span<const double> h, double lambda1, double lambda2);

/// Unweighted root-mean-square residual over all observations.
double factor_rms(const FactorProblem& problem, std::span<const double> w, std::span<const double> h);

/// Entries uniform in the open interval (0.25, 0.75), deterministic per seed.
FactorPair wnmf_init(std::size_t m, std::size_t n, std::uint64_t seed);

/// One multiplicative update of w followed by one of h (using the new w).
/// Throws NumericalError naming `iteration` if anything turns non-finite.
FactorPair wnmf_step(const FactorPair& current, const FactorProblem& problem, const WnmfConfig& cfg,
                     int iteration = 0);

struct WnmfResult {
  FactorPair factors;
  std::vector<double> trace;      // objective before the first step, then after each step
  std::vector<double> rms_trace;  // unweighted RMS at the same points
  int iterations = 0;
};

WnmfResult wnmf_solve(const FactorProblem& problem, const WnmfConfig& cfg);
WnmfResult wnmf_solve(const FactorProblem& problem, const WnmfConfig& cfg, FactorPair start);

/// Element-wise logistic 1 / (1 + exp(-a (v - thresh))), exponent clamped to +-500.
std::vector<double> sigmoid_relax(std::span<const double> v, double a, double thresh);

struct ThresholdLoss {
  double loss = 0.0;
  double grad_w = 0.0;  // d loss / d w_thresh
  double grad_h = 0.0;  // d loss / d h_thresh
};

/// 0.5 * sum C_v^2 (V_v - B(phi(w) phi(h))_v)^2 and its analytic gradient in
/// the two thresholds.
ThresholdLoss threshold_loss(const FactorProblem& problem, std::span<const double> w,
                             std::span<const double> h, double a, double w_thresh, double h_thresh);

struct ThresholdResult {
  double w_thresh = 0.0;
  double h_thresh = 0.0;
  double loss = 0.0;
  double initial_loss = 0.0;
  int iterations = 0;
};

/// Backtracking gradient descent on threshold_loss starting from `start`.
ThresholdResult threshold_search(std::span<const double> w, std::span<const double> h,
                                 const FactorProblem& problem, double a,
                                 const AnnealSchedule& sched, std::pair<double, double> start);

/// 1 where v >= thresh, else 0.
std::vector<double> float2binary(std::span<const double> v, double thresh);

struct AnnealRound {
  double a = 0.0;
  double w_thresh = 0.0;
  double h_thresh = 0.0;
  double loss = 0.0;
  int iterations = 0;
};

struct BmfReport {
  double rms = 0.0;
  double objective = 0.0;            // binary factors, including regularizers
  std::vector<double> wnmf_trace;    // relaxed stage of the selected restart
  std::vector<double> wnmf_rms_trace;
  std::vector<AnnealRound> rounds;   // annealing diagnostics of the selected restart
  int restart = 0;                   // index of the selected restart
  std::vector<double> restart_rms;   // final RMS of every restart
};

struct BmfResult {
  FactorPair factors;  // always binary
  BmfReport report;
};

/// Relaxed solve, annealed threshold search and hard binarization, repeated
/// over `restarts` seeds; keeps the lowest-RMS result (earliest on ties).
BmfResult bmf_solve(const FactorProblem& problem, const WnmfConfig& cfg,
                    const AnnealSchedule& sched, int restarts = 8);

/// Binarizes a given relaxed pair (single restart, no WNMF).
BmfResult bmf_binarize(const FactorProblem& problem, const FactorPair& relaxed,
                       const WnmfConfig& cfg, const AnnealSchedule& sched);

/// Seed of restart `index` derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace qrtag
