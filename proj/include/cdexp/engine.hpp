// Joint-distribution updating iteration for
//
//   Omega(mu, lambda) = min_q { lambda I(q_X, q_{Y|X}) + D(q_X||P) + mu E_q[d] }.
//
// Each step multiplies q by exp(-omega_q) and renormalizes, where
//
//   omega_q(x,y) = (1-lambda) log q_X(x) + lambda log q_{X|Y}(x|y) + mu d(x,y) - log P(x).
//
// Everything is carried in the log domain; Lambda is a max-shifted sum.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdexp/prob.hpp"

namespace cdexp {

/// Raised when q puts mass outside supp(P), or has a zero where the
/// iteration needs strict positivity.
class SupportError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct TiltParams {
  double mu = 0.0;
  double lambda = 0.0;

  TiltParams() = default;
  TiltParams(double mu_, double lambda_) : mu(mu_), lambda(lambda_) {
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw std::invalid_argument("tilt: mu must be finite and >= 0");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("tilt: lambda must lie in [0, 1]");
  }
};

/// omega over X×Y. Cells outside supp(P) hold +inf.
struct OmegaTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t x, std::size_t y) const { return values[x * cols + y]; }
};

struct TraceRow {
  std::size_t t = 0;
  double objective = 0.0;         // F(q[t], q[t]) = E_q[omega_q]
  double minus_log_lambda = 0.0;  // -log Lambda_{q[t]} = F(q[t], q[t+1])
  double step_kl = 0.0;           // D(q[t+1] || q[t])
};

using IterationTrace = std::vector<TraceRow>;

struct SolveOptions {
  /// Stop once successive -log Lambda values differ by less than `tol` and
  /// the certified optimality gap is at most `gap_tol`.
  double tol = 1e-10;
  double gap_tol = 1e-9;
  std::size_t max_iters = 100000;
  std::optional<JointPmf> initial;
  bool record_trace = true;
  /// Keep q[1], q[2], ... (row-major cells) for post-hoc convergence checks.
  bool store_iterates = false;
};

struct SolveReport {
  double omega_value = 0.0;
  /// Certified lower bound on Omega: min over cells of omega_q, which holds
  /// for every q by convexity of the objective. Best value over the run.
  double omega_lower = -std::numeric_limits<double>::infinity();
  JointPmf minimizer = JointPmf::uniform(1, 1);
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t clamp_events = 0;
  IterationTrace trace;
  std::vector<std::vector<double>> iterates;
  /// max_T T * (-log Lambda_T - omega_value) and D(q_final || q[1]); the
  /// first should not exceed the second.
  double max_scaled_gap = 0.0;
  double initial_divergence = 0.0;
};

namespace detail {

inline constexpr double kPositivityFloor = 1e-300;

/// Working state: the current q with its marginals and logs.
struct EngineState {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> q;
  std::vector<double> log_q;
  std::vector<double> log_qx;
  std::vector<double> log_qy;
};

inline void check_shape(const JointPmf& q, const Problem& problem) {
  if (q.rows() != problem.x_size() || q.cols() != problem.y_size()) {
    throw std::invalid_argument("joint distribution shape does not match the problem");
  }
}

/// Loads `cells` into `s`, enforcing supp(q) == supp(P) x Y.
inline void load_state(EngineState& s, std::span<const double> cells, std::size_t rows, std::size_t cols,
                       const Problem& problem) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  s.rows = rows;
  s.cols = cols;
  s.q.assign(cells.begin(), cells.end());
  s.log_q.assign(rows * cols, kNegInf);
  s.log_qx.assign(rows, 0.0);
  s.log_qy.assign(cols, 0.0);
  for (std::size_t x = 0; x < rows; ++x) {
    const bool active = problem.source[x] > 0.0;
    for (std::size_t y = 0; y < cols; ++y) {
      const double v = s.q[x * cols + y];
      if (active && !(v > 0.0)) {
        throw SupportError("q has a zero entry at (" + std::to_string(x) + ", " + std::to_string(y) +
                           ") inside the source support");
      }
      if (!active && v > 0.0) {
        throw SupportError("q places mass at (" + std::to_string(x) + ", " + std::to_string(y) +
                           ") where the source probability is zero");
      }
      s.log_qx[x] += v;
      s.log_qy[y] += v;
    }
  }
  for (std::size_t i = 0; i < s.q.size(); ++i)
    if (s.q[i] > 0.0) s.log_q[i] = std::log(s.q[i]);
  for (double& v : s.log_qx) v = v > 0.0 ? std::log(v) : kNegInf;
  for (double& v : s.log_qy) v = v > 0.0 ? std::log(v) : kNegInf;
}

inline EngineState make_state(std::span<const double> cells, std::size_t rows, std::size_t cols,
                              const Problem& problem) {
  EngineState s;
  load_state(s, cells, rows, cols, problem);
  return s;
}

inline void fill_omega(const EngineState& s, const Problem& problem, const TiltParams& tilt,
                       std::vector<double>& omega) {
  omega.assign(s.rows * s.cols, std::numeric_limits<double>::infinity());
  const double lam = tilt.lambda;
  for (std::size_t x = 0; x < s.rows; ++x) {
    const double px = problem.source[x];
    if (px <= 0.0) continue;
    const double row_term = (1.0 - lam) * s.log_qx[x] - std::log(px);
    for (std::size_t y = 0; y < s.cols; ++y) {
      const std::size_t i = x * s.cols + y;
      const double log_cond = s.log_q[i] - s.log_qy[y];
      // lambda == 0 must not multiply an undefined conditional.
      const double cond_term = lam == 0.0 ? 0.0 : lam * log_cond;
      omega[i] = row_term + cond_term + tilt.mu * problem.distortion.values()[i];
    }
  }
}

/// log Lambda = log sum_{x,y} q(x,y) exp(-omega(x,y)), max-shifted.
inline double log_lambda(const EngineState& s, const std::vector<double>& omega) {
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.q.size(); ++i)
    if (s.q[i] > 0.0) shift = std::max(shift, s.log_q[i] - omega[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < s.q.size(); ++i)
    if (s.q[i] > 0.0) sum += std::exp(s.log_q[i] - omega[i] - shift);
  return shift + std::log(sum);
}

inline double min_omega(const EngineState& s, const std::vector<double>& omega) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.q.size(); ++i)
    if (s.q[i] > 0.0) m = std::min(m, omega[i]);
  return m;
}

inline double expected_omega(const EngineState& s, const std::vector<double>& omega) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.q.size(); ++i)
    if (s.q[i] > 0.0) sum += s.q[i] * omega[i];
  return sum;
}

/// One multiplicative step; returns the number of cells clamped to the floor.
inline std::size_t apply_update(const EngineState& s, const std::vector<double>& omega, double log_norm,
                                std::vector<double>& next) {
  next.assign(s.q.size(), 0.0);
  std::size_t clamped = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < s.q.size(); ++i) {
    if (!(s.q[i] > 0.0)) continue;
    double v = std::exp(s.log_q[i] - omega[i] - log_norm);
    if (!(v >= kPositivityFloor)) {
      v = kPositivityFloor;
      ++clamped;
    }
    next[i] = v;
    sum += v;
  }
  for (double& v : next) v /= sum;
  return clamped;
}

inline double cell_kl(std::span<const double> p, std::span<const double> q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += detail::xlogy_ratio(p[i], q[i]);
  return sum;
}

}  // namespace detail

/// Requires q strictly positive on supp(P)×Y and zero elsewhere.
inline OmegaTable omega_table(const JointPmf& q, const Problem& problem, const TiltParams& tilt) {
  detail::check_shape(q, problem);
  const auto s = detail::make_state(q.cells(), q.rows(), q.cols(), problem);
  OmegaTable table{q.rows(), q.cols(), {}};
  detail::fill_omega(s, problem, tilt, table.values);
  return table;
}

inline double log_normalization(const JointPmf& q, const Problem& problem, const TiltParams& tilt) {
  detail::check_shape(q, problem);
  const auto s = detail::make_state(q.cells(), q.rows(), q.cols(), problem);
  std::vector<double> omega;
  detail::fill_omega(s, problem, tilt, omega);
  return detail::log_lambda(s, omega);
}

/// Lambda_q = E_q[exp(-omega_q)].
inline double normalization(const JointPmf& q, const Problem& problem, const TiltParams& tilt) {
  return std::exp(log_normalization(q, problem, tilt));
}

inline JointPmf update_step(const JointPmf& q, const Problem& problem, const TiltParams& tilt) {
  detail::check_shape(q, problem);
  const auto s = detail::make_state(q.cells(), q.rows(), q.cols(), problem);
  std::vector<double> omega, next;
  detail::fill_omega(s, problem, tilt, omega);
  detail::apply_update(s, omega, detail::log_lambda(s, omega), next);
  return JointPmf(q.rows(), q.cols(), std::move(next));
}

/// F(q,q) = E_q[omega_q], evaluated cell by cell. Zero entries are allowed.
inline double objective(const JointPmf& q, const Problem& problem, const TiltParams& tilt) {
  detail::check_shape(q, problem);
  const auto m = marginals(q);
  double sum = 0.0;
  for (std::size_t x = 0; x < q.rows(); ++x) {
    for (std::size_t y = 0; y < q.cols(); ++y) {
      const double v = q.at(x, y);
      if (v <= 0.0) continue;
      const double px = problem.source[x];
      if (px <= 0.0) {
        throw SupportError("q places mass at (" + std::to_string(x) + ", " + std::to_string(y) +
                           ") where the source probability is zero");
      }
      const double omega = (1.0 - tilt.lambda) * std::log(m.x[x]) + tilt.lambda * std::log(v / m.y[y]) +
                           tilt.mu * problem.distortion.at(x, y) - std::log(px);
      sum += v * omega;
    }
  }
  return sum;
}

/// The same quantity as `objective`, assembled as lambda I + D(q_X||P) + mu E[d].
inline double objective_from_functionals(const JointPmf& q, const Problem& problem, const TiltParams& tilt) {
  detail::check_shape(q, problem);
  const auto m = marginals(q);
  const double kl = kl_divergence(m.x, problem.source.probs());
  if (std::isinf(kl)) throw SupportError("q_X is not absolutely continuous with respect to P");
  return tilt.lambda * mutual_information(q) + kl + tilt.mu * expected_distortion(q, problem.distortion);
}

/// Uniform over supp(P)×Y.
inline JointPmf default_initial(const Problem& problem) {
  const std::size_t rows = problem.x_size(), cols = problem.y_size();
  std::size_t active = 0;
  for (std::size_t x = 0; x < rows; ++x) active += problem.source[x] > 0.0 ? 1 : 0;
  std::vector<double> cells(rows * cols, 0.0);
  const double w = 1.0 / static_cast<double>(active * cols);
  for (std::size_t x = 0; x < rows; ++x)
    if (problem.source[x] > 0.0)
      for (std::size_t y = 0; y < cols; ++y) cells[x * cols + y] = w;
  return JointPmf(rows, cols, std::move(cells));
}

/// Restricts a user initialization to supp(P)×Y and renormalizes. Cells
/// inside the support must be strictly positive.
inline JointPmf restrict_to_support(const JointPmf& q, const Problem& problem) {
  detail::check_shape(q, problem);
  std::vector<double> cells(q.cells().begin(), q.cells().end());
  double sum = 0.0;
  for (std::size_t x = 0; x < q.rows(); ++x) {
    for (std::size_t y = 0; y < q.cols(); ++y) {
      double& v = cells[x * q.cols() + y];
      if (problem.source[x] <= 0.0) {
        v = 0.0;
      } else if (!(v > 0.0)) {
        throw SupportError("initial distribution must be strictly positive; zero at (" + std::to_string(x) +
                           ", " + std::to_string(y) + ")");
      }
      sum += v;
    }
  }
  for (double& v : cells) v /= sum;
  return JointPmf(q.rows(), q.cols(), std::move(cells));
}

/// Runs the updating iteration until successive values of -log Lambda
/// differ by less than `tol`, or `max_iters` steps have been taken.
inline SolveReport solve_omega(const Problem& problem, const TiltParams& tilt, const SolveOptions& opts = {}) {
  const std::size_t rows = problem.x_size(), cols = problem.y_size();
  const JointPmf start = opts.initial ? restrict_to_support(*opts.initial, problem) : default_initial(problem);
  const std::vector<double> first(start.cells().begin(), start.cells().end());

  SolveReport report;
  auto state = detail::make_state(first, rows, cols, problem);
  std::vector<double> omega, next;
  double prev_mll = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> mll_history;

  for (std::size_t t = 1; t <= opts.max_iters; ++t) {
    if (opts.store_iterates) report.iterates.push_back(state.q);
    detail::fill_omega(state, problem, tilt, omega);
    const double log_norm = detail::log_lambda(state, omega);
    const double mll = -log_norm;
    const double obj = detail::expected_omega(state, omega);
    report.omega_lower = std::max(report.omega_lower, detail::min_omega(state, omega));
    report.clamp_events += detail::apply_update(state, omega, log_norm, next);
    if (opts.record_trace) {
      // cell_kl can round slightly below zero once the iterates coincide.
      report.trace.push_back({t, obj, mll, std::max(0.0, detail::cell_kl(next, state.q))});
    }
    mll_history.push_back(mll);
    detail::load_state(state, next, rows, cols, problem);
    report.iterations = t;
    if (t > 1 && std::abs(mll - prev_mll) < opts.tol && mll - report.omega_lower <= opts.gap_tol) {
      report.converged = true;
      break;
    }
    prev_mll = mll;
  }

  detail::fill_omega(state, problem, tilt, omega);
  report.omega_lower = std::max(report.omega_lower, detail::min_omega(state, omega));
  report.minimizer = JointPmf(rows, cols, state.q);
  report.omega_value = objective(report.minimizer, problem, tilt);
  if (opts.store_iterates) report.iterates.push_back(state.q);

  for (std::size_t i = 0; i < mll_history.size(); ++i) {
    const double gap = static_cast<double>(i + 1) * (mll_history[i] - report.omega_value);
    report.max_scaled_gap = std::max(report.max_scaled_gap, gap);
  }
  report.initial_divergence = detail::cell_kl(state.q, first);
  return report;
}

struct ConvergenceCheck {
  bool monotone_chain = true;
  double worst_chain_violation = 0.0;
  bool rate_bound = true;
  /// Only evaluated when iterates were stored.
  bool divergence_descent = true;
  double worst_descent_violation = 0.0;
};

/// Checks the monotone chain F(q[t],q[t]) >= -log Lambda_t >= F(q[t+1],q[t+1]),
/// the T * gap <= D(q_final||q[1]) rate bound, and (with iterates) that
/// D(q_final || q[t]) does not increase.
inline ConvergenceCheck verify_convergence(const SolveReport& report, double chain_slack = 1e-10,
                                           double rate_slack = 1e-6, double descent_slack = 1e-9) {
  ConvergenceCheck check;
  const auto& tr = report.trace;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    double v = tr[i].minus_log_lambda - tr[i].objective;
    if (i + 1 < tr.size()) v = std::max(v, tr[i + 1].objective - tr[i].minus_log_lambda);
    check.worst_chain_violation = std::max(check.worst_chain_violation, v);
  }
  check.monotone_chain = check.worst_chain_violation <= chain_slack;
  check.rate_bound = report.max_scaled_gap <= report.initial_divergence + rate_slack;
  if (!report.iterates.empty()) {
    const auto& last = report.iterates.back();
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& it : report.iterates) {
      const double d = detail::cell_kl(last, it);
      check.worst_descent_violation = std::max(check.worst_descent_violation, d - prev);
      prev = d;
    }
    check.divergence_descent = check.worst_descent_violation <= descent_slack;
  }
  return check;
}

}  // namespace cdexp
