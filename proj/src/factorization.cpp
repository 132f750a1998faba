#include "qrtag/factorization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace qrtag {

// ---------------------------------------------------------------------------
// ProjectionOperator

ProjectionOperator::ProjectionOperator(std::size_t m, std::size_t n,
                                       std::vector<std::vector<Term>> terms,
                                       std::vector<double> coefs)
    : m_(m), n_(n), coefs_(std::move(coefs)) {
  if (terms.size() != coefs_.size()) {
    throw std::invalid_argument("projection operator: " + std::to_string(terms.size()) +
                                " term lists for " + std::to_string(coefs_.size()) + " coefficients");
  }
  row_start_.reserve(terms.size() + 1);
  row_start_.push_back(0);
  for (std::size_t v = 0; v < terms.size(); ++v) {
    if (!(coefs_[v] >= 0.0)) throw std::invalid_argument("projection coefficients must be >= 0");
    for (const Term& t : terms[v]) {
      if (t.p >= m_ || t.q >= n_) throw std::invalid_argument("projection term index out of range");
      terms_.push_back(t);
    }
    row_start_.push_back(terms_.size());
  }
}

ProjectionOperator ProjectionOperator::identity(std::size_t m, std::size_t n) {
  std::vector<std::vector<Term>> terms(m * n);
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      terms[p * n + q].push_back({static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(q)});
    }
  }
  return {m, n, std::move(terms), std::vector<double>(m * n, 1.0)};
}

ProjectionOperator ProjectionOperator::cell_views(const CellSpec& cell, const ViewSpec& view) {
  view.validate_against(cell);
  const int s = cell.scale;
  const auto area = static_cast<std::size_t>(cell.window_pixels());
  std::vector<std::vector<Term>> terms(static_cast<std::size_t>(view.count()));
  for (std::size_t v = 0; v < terms.size(); ++v) {
    const Shift shift = view.offsets[v];
    terms[v].reserve(area);
    for (int r = 0; r < s; ++r) {
      const int fr = wrap_index(r + shift.dv, s);
      for (int c = 0; c < s; ++c) {
        const int fc = wrap_index(c + shift.du, s);
        terms[v].push_back({static_cast<std::uint32_t>(fr * s + fc), static_cast<std::uint32_t>(r * s + c)});
      }
    }
  }
  std::vector<double> coefs(terms.size(), 1.0 / static_cast<double>(area));
  return {area, area, std::move(terms), std::move(coefs)};
}

std::vector<double> ProjectionOperator::forward(std::span<const double> w,
                                                std::span<const double> h) const {
  std::vector<double> out(coefs_.size());
  for (std::size_t v = 0; v < coefs_.size(); ++v) {
    double sum = 0.0;
    for (std::size_t k = row_start_[v]; k < row_start_[v + 1]; ++k) sum += w[terms_[k].p] * h[terms_[k].q];
    out[v] = coefs_[v] * sum;
  }
  return out;
}

std::vector<double> ProjectionOperator::adjoint_times_h(std::span<const double> y,
                                                        std::span<const double> h) const {
  std::vector<double> out(m_, 0.0);
  for (std::size_t v = 0; v < coefs_.size(); ++v) {
    const double scale = coefs_[v] * y[v];
    if (scale == 0.0) continue;
    for (std::size_t k = row_start_[v]; k < row_start_[v + 1]; ++k) out[terms_[k].p] += scale * h[terms_[k].q];
  }
  return out;
}

std::vector<double> ProjectionOperator::adjoint_times_w(std::span<const double> y,
                                                        std::span<const double> w) const {
  std::vector<double> out(n_, 0.0);
  for (std::size_t v = 0; v < coefs_.size(); ++v) {
    const double scale = coefs_[v] * y[v];
    if (scale == 0.0) continue;
    for (std::size_t k = row_start_[v]; k < row_start_[v + 1]; ++k) out[terms_[k].q] += scale * w[terms_[k].p];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Problem and configuration

FactorProblem::FactorProblem(std::vector<double> target_, std::vector<double> weights_,
                             ProjectionOperator op_)
    : target(std::move(target_)), weights(std::move(weights_)), op(std::move(op_)) {
  validate();
}

void FactorProblem::validate() const {
  if (target.size() != op.outputs() || weights.size() != op.outputs()) {
    std::ostringstream msg;
    msg << "factor problem shape mismatch: target " << target.size() << ", weights "
        << weights.size() << ", operator outputs " << op.outputs();
    throw std::invalid_argument(msg.str());
  }
  for (double c : weights) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("weights must be finite and >= 0");
  }
  for (double v : target) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("targets must be finite and >= 0");
  }
}

void WnmfConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("lambda1, lambda2 must be >= 0");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (window < 1) throw std::invalid_argument("convergence window must be >= 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

void AnnealSchedule::validate() const {
  if (a_values.empty()) throw std::invalid_argument("annealing schedule is empty");
  for (std::size_t i = 0; i < a_values.size(); ++i) {
    if (!(a_values[i] > 0.0)) throw std::invalid_argument("sigmoid steepness must be positive");
    if (i > 0 && !(a_values[i] > a_values[i - 1])) {
      throw std::invalid_argument("sigmoid steepness sequence must be strictly increasing");
    }
  }
  if (inner_max_iters < 1) throw std::invalid_argument("inner_max_iters must be >= 1");
  if (!(learn_rate > 0.0)) throw std::invalid_argument("learn_rate must be positive");
}

// ---------------------------------------------------------------------------
// Objective

namespace {

double weighted_fit(const FactorProblem& problem, const std::vector<double>& rendered) {
  double fit = 0.0;
  for (std::size_t v = 0; v < rendered.size(); ++v) {
    const double r = problem.weights[v] * (problem.target[v] - rendered[v]);
    fit += r * r;
  }
  return 0.5 * fit;
}

double squared_norm(std::span<const double> x) {
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

void check_factor_sizes(const FactorProblem& problem, std::span<const double> w,
                        std::span<const double> h) {
  if (w.size() != problem.op.m() || h.size() != problem.op.n()) {
    std::ostringstream msg;
    msg << "factor sizes (" << w.size() << ", " << h.size() << ") do not match operator ("
        << problem.op.m() << ", " << problem.op.n() << ")";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

double factor_objective(const FactorProblem& problem, std::span<const double> w,
                        std::span<const double> h, double lambda1, double lambda2) {
  check_factor_sizes(problem, w, h);
  return weighted_fit(problem, problem.op.forward(w, h)) + lambda1 * squared_norm(w) +
         lambda2 * squared_norm(h);
}

double factor_rms(const FactorProblem& problem, std::span<const double> w, std::span<const double> h) {
  check_factor_sizes(problem, w, h);
  const std::vector<double> rendered = problem.op.forward(w, h);
  if (rendered.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t v = 0; v < rendered.size(); ++v) {
    const double d = problem.target[v] - rendered[v];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(rendered.size()));
}

// ---------------------------------------------------------------------------
// Relaxed stage

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

FactorPair wnmf_init(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Midpoint of a 53-bit lattice cell, so the result never touches 0 or 1.
  auto open_unit = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  FactorPair pair;
  pair.mode = FactorMode::relaxed;
  pair.w.resize(m);
  pair.h.resize(n);
  for (double& x : pair.w) x = 0.25 + 0.5 * open_unit();
  for (double& x : pair.h) x = 0.25 + 0.5 * open_unit();
  return pair;
}

FactorPair wnmf_step(const FactorPair& current, const FactorProblem& problem, const WnmfConfig& cfg,
                     int iteration) {
  check_factor_sizes(problem, current.w, current.h);
  const auto& op = problem.op;
  const std::size_t q = op.outputs();

  // The fit term weights residuals by C o C, so both numerator and
  // denominator carry the squared mask.
  std::vector<double> c2(q);
  std::vector<double> c2v(q);
  for (std::size_t v = 0; v < q; ++v) {
    c2[v] = problem.weights[v] * problem.weights[v];
    c2v[v] = c2[v] * problem.target[v];
  }

  auto fail = [iteration](const char* what) {
    std::ostringstream msg;
    msg << "non-finite " << what << " in multiplicative update at iteration " << iteration;
    throw NumericalError(msg.str());
  };

  FactorPair next = current;
  next.mode = FactorMode::relaxed;

  {
    std::vector<double> rendered = op.forward(current.w, current.h);
    for (std::size_t v = 0; v < q; ++v) rendered[v] *= c2[v];
    const std::vector<double> numer = op.adjoint_times_h(c2v, current.h);
    const std::vector<double> denom = op.adjoint_times_h(rendered, current.h);
    for (std::size_t p = 0; p < next.w.size(); ++p) {
      next.w[p] = current.w[p] * numer[p] / (denom[p] + 2.0 * cfg.lambda1 * current.w[p] + cfg.epsilon);
    }
    if (!all_finite(next.w)) fail("w");
  }
  {
    std::vector<double> rendered = op.forward(next.w, current.h);
    for (std::size_t v = 0; v < q; ++v) rendered[v] *= c2[v];
    const std::vector<double> numer = op.adjoint_times_w(c2v, next.w);
    const std::vector<double> denom = op.adjoint_times_w(rendered, next.w);
    for (std::size_t k = 0; k < next.h.size(); ++k) {
      next.h[k] = current.h[k] * numer[k] / (denom[k] + 2.0 * cfg.lambda2 * current.h[k] + cfg.epsilon);
    }
    if (!all_finite(next.h)) fail("h");
  }
  return next;
}

WnmfResult wnmf_solve(const FactorProblem& problem, const WnmfConfig& cfg) {
  return wnmf_solve(problem, cfg, wnmf_init(problem.op.m(), problem.op.n(), cfg.seed));
}

WnmfResult wnmf_solve(const FactorProblem& problem, const WnmfConfig& cfg, FactorPair start) {
  cfg.validate();
  problem.validate();
  WnmfResult result;
  result.factors = std::move(start);
  result.trace.reserve(static_cast<std::size_t>(std::min(cfg.max_iters, 4096)) + 1);
  result.trace.push_back(factor_objective(problem, result.factors.w, result.factors.h, cfg.lambda1, cfg.lambda2));
  result.rms_trace.push_back(factor_rms(problem, result.factors.w, result.factors.h));

  for (int it = 1; it <= cfg.max_iters; ++it) {
    result.factors = wnmf_step(result.factors, problem, cfg, it);
    const double f = factor_objective(problem, result.factors.w, result.factors.h, cfg.lambda1, cfg.lambda2);
    if (!std::isfinite(f)) {
      throw NumericalError("non-finite objective at iteration " + std::to_string(it));
    }
    result.trace.push_back(f);
    result.rms_trace.push_back(factor_rms(problem, result.factors.w, result.factors.h));
    result.iterations = it;
    if (f == 0.0) break;
    if (it >= cfg.window) {
      const double before = result.trace[result.trace.size() - 1 - static_cast<std::size_t>(cfg.window)];
      if (std::abs(before - f) <= cfg.tol * std::max(std::abs(before), std::numeric_limits<double>::min())) {
        break;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Binarization stage

std::vector<double> sigmoid_relax(std::span<const double> v, double a, double thresh) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = std::clamp(a * (v[i] - thresh), -500.0, 500.0);
    out[i] = 1.0 / (1.0 + std::exp(-z));
  }
  return out;
}

ThresholdLoss threshold_loss(const FactorProblem& problem, std::span<const double> w,
                             std::span<const double> h, double a, double w_thresh, double h_thresh) {
  check_factor_sizes(problem, w, h);
  const std::vector<double> sw = sigmoid_relax(w, a, w_thresh);
  const std::vector<double> sh = sigmoid_relax(h, a, h_thresh);
  const std::vector<double> rendered = problem.op.forward(sw, sh);

  ThresholdLoss out;
  std::vector<double> residual(rendered.size());
  for (std::size_t v = 0; v < rendered.size(); ++v) {
    const double c2 = problem.weights[v] * problem.weights[v];
    const double d = problem.target[v] - rendered[v];
    out.loss += 0.5 * c2 * d * d;
    residual[v] = c2 * d;
  }
  // d phi / d thresh = -a phi (1 - phi); the loss gradient through B is
  // -residual^T B(d phi_w phi_h^T).
  const std::vector<double> gw = problem.op.adjoint_times_h(residual, sh);
  const std::vector<double> gh = problem.op.adjoint_times_w(residual, sw);
  for (std::size_t p = 0; p < sw.size(); ++p) out.grad_w += gw[p] * a * sw[p] * (1.0 - sw[p]);
  for (std::size_t k = 0; k < sh.size(); ++k) out.grad_h += gh[k] * a * sh[k] * (1.0 - sh[k]);
  return out;
}

ThresholdResult threshold_search(std::span<const double> w, std::span<const double> h,
                                 const FactorProblem& problem, double a,
                                 const AnnealSchedule& sched, std::pair<double, double> start) {
  if (!(a > 0.0)) throw std::invalid_argument("sigmoid steepness must be positive");
  constexpr double kGradTol = 1e-8;
  constexpr int kMaxHalvings = 60;

  ThresholdResult res;
  res.w_thresh = start.first;
  res.h_thresh = start.second;
  ThresholdLoss cur = threshold_loss(problem, w, h, a, res.w_thresh, res.h_thresh);
  res.initial_loss = cur.loss;

  for (int it = 0; it < sched.inner_max_iters; ++it) {
    if (!std::isfinite(cur.grad_w) || !std::isfinite(cur.grad_h)) {
      throw NumericalError("non-finite threshold gradient at iteration " + std::to_string(it));
    }
    if (std::hypot(cur.grad_w, cur.grad_h) < kGradTol) break;
    res.iterations = it + 1;

    double step = sched.learn_rate;
    bool moved = false;
    for (int k = 0; k < kMaxHalvings; ++k, step *= 0.5) {
      const double tw = res.w_thresh - step * cur.grad_w;
      const double th = res.h_thresh - step * cur.grad_h;
      const ThresholdLoss trial = threshold_loss(problem, w, h, a, tw, th);
      if (trial.loss < cur.loss) {
        res.w_thresh = tw;
        res.h_thresh = th;
        cur = trial;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  res.loss = cur.loss;
  return res;
}

std::vector<double> float2binary(std::span<const double> v, double thresh) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] >= thresh ? 1.0 : 0.0;
  return out;
}

namespace {

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

BmfResult bmf_binarize(const FactorProblem& problem, const FactorPair& relaxed,
                       const WnmfConfig& cfg, const AnnealSchedule& sched) {
  sched.validate();
  check_factor_sizes(problem, relaxed.w, relaxed.h);

  std::vector<double> cur_w = relaxed.w;
  std::vector<double> cur_h = relaxed.h;
  std::vector<double> src_w;
  std::vector<double> src_h;
  double tw = 0.0;
  double th = 0.0;

  BmfResult result;
  for (std::size_t k = 0; k < sched.a_values.size(); ++k) {
    const double a = sched.a_values[k];
    src_w = sched.mode == AnnealMode::chained ? cur_w : relaxed.w;
    src_h = sched.mode == AnnealMode::chained ? cur_h : relaxed.h;
    const std::pair<double, double> start =
        (k == 0 && sched.thresh_init) ? *sched.thresh_init : std::pair{mean_of(src_w), mean_of(src_h)};
    const ThresholdResult t = threshold_search(src_w, src_h, problem, a, sched, start);
    tw = t.w_thresh;
    th = t.h_thresh;
    cur_w = sigmoid_relax(src_w, a, tw);
    cur_h = sigmoid_relax(src_h, a, th);
    result.report.rounds.push_back({a, tw, th, t.loss, t.iterations});
  }

  // Hard threshold of the last squashed input at its own threshold, i.e. the
  // infinite-steepness limit of the final sigmoid.
  result.factors.w = float2binary(src_w, tw);
  result.factors.h = float2binary(src_h, th);
  result.factors.mode = FactorMode::binary;
  result.report.rms = factor_rms(problem, result.factors.w, result.factors.h);
  result.report.objective =
      factor_objective(problem, result.factors.w, result.factors.h, cfg.lambda1, cfg.lambda2);
  return result;
}

BmfResult bmf_solve(const FactorProblem& problem, const WnmfConfig& cfg,
                    const AnnealSchedule& sched, int restarts) {
  if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  cfg.validate();
  sched.validate();

  BmfResult best;
  std::vector<double> restart_rms;
  restart_rms.reserve(static_cast<std::size_t>(restarts));
  for (int r = 0; r < restarts; ++r) {
    WnmfConfig run_cfg = cfg;
    run_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
    WnmfResult relaxed = wnmf_solve(problem, run_cfg);
    BmfResult candidate = bmf_binarize(problem, relaxed.factors, cfg, sched);
    candidate.report.wnmf_trace = std::move(relaxed.trace);
    candidate.report.wnmf_rms_trace = std::move(relaxed.rms_trace);
    candidate.report.restart = r;
    restart_rms.push_back(candidate.report.rms);
    if (r == 0 || candidate.report.rms < best.report.rms) best = std::move(candidate);
  }
  best.report.restart_rms = std::move(restart_rms);
  return best;
}

}  // namespace qrtag
