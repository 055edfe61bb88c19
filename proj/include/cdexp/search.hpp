// Outer maximization over the tilt parameters.
//
//   G(mu, lambda)(R, delta) = Omega(mu, lambda) - lambda R - mu delta
//   G(lambda)(R, delta)     = max_{mu >= 0} G(mu, lambda)
//   G(R, delta)             = max_{0 <= lambda <= 1} G(lambda)
//
// (mu, lambda) -> G(mu, lambda) is a pointwise minimum of affine maps, hence
// jointly concave, and nested golden-section searches suffice.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>

#include "cdexp/engine.hpp"
#include "cdexp/oracle.hpp"

namespace cdexp {

struct SearchOptions {
  double lambda_tol = 1e-4;
  double mu_tol = 1e-4;
  double mu_cap = 1e4;
  /// Tolerance of the inner iteration at final refinement.
  double inner_tol = 1e-10;
  /// Inner tolerance while the bracket is still wide.
  double inner_tol_loose = 1e-8;
  /// Certified-gap tolerance of the inner iteration.
  double inner_gap_tol = 1e-9;
  std::size_t max_iters = 100000;
};

struct SearchDiagnostics {
  std::size_t bracket_expansions = 0;
  std::size_t evaluations = 0;
  /// Inner solves that hit max_iters during the search.
  std::size_t unconverged_evaluations = 0;
  bool mu_at_cap = false;
  /// False if the final solve at the reported maximizer hit max_iters.
  bool all_converged = true;

  void merge(const SearchDiagnostics& o) {
    bracket_expansions += o.bracket_expansions;
    evaluations += o.evaluations;
    unconverged_evaluations += o.unconverged_evaluations;
    mu_at_cap = mu_at_cap || o.mu_at_cap;
    all_converged = all_converged && o.all_converged;
  }
};

struct GoldenResult {
  double arg = 0.0;
  double value = -std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
};

/// Golden-section maximization of a unimodal f on [lo, hi]. `f` receives the
/// current bracket width as its second argument so callers can tighten
/// their own accuracy as the bracket shrinks. Returns the best point seen,
/// endpoints included.
inline GoldenResult golden_section_max(const std::function<double(double, double)>& f, double lo, double hi,
                                       double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  GoldenResult best;
  auto eval = [&](double x, double width) {
    const double v = f(x, width);
    ++best.evaluations;
    if (v > best.value) {
      best.value = v;
      best.arg = x;
    }
    return v;
  };
  eval(lo, hi - lo);
  if (hi <= lo) return best;
  eval(hi, hi - lo);
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = eval(c, b - a), fd = eval(d, b - a);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = eval(c, b - a);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = eval(d, b - a);
    }
  }
  return best;
}

struct LambdaResult {
  double value = 0.0;  // G(lambda)(R, delta)
  double mu_star = 0.0;
  SearchDiagnostics diagnostics;
};

struct ExponentResult {
  double value = 0.0;
  double lambda_star = 0.0;
  double mu_star = 0.0;
  SolveReport inner;  // at (mu*, lambda*), solved with the final tolerance
  SearchDiagnostics diagnostics;
};

struct CutoffResult {
  double value = 0.0;
  double mu_star = 0.0;
  double lambda = 0.0;
  SearchDiagnostics diagnostics;
};

struct RdApproxResult {
  double approx = 0.0;
  double lambda = 0.0;
  double bound = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double alpha = 0.0;
  double derivative = 0.0;  // R'(delta|P), finite-difference estimate
  bool certified = false;
  CutoffResult cutoff;
};

namespace search_detail {

inline double inner_tolerance(const SearchOptions& opts, double width) {
  return std::clamp(width * 1e-6, opts.inner_tol, std::max(opts.inner_tol, opts.inner_tol_loose));
}

/// Omega(mu, lambda). An unconverged solve contributes its certified lower
/// bound, so the outer search can only underestimate.
inline double omega_value(const Problem& problem, double mu, double lambda, double tol, double gap_tol,
                          std::size_t max_iters, SearchDiagnostics& diag) {
  SolveOptions so;
  so.tol = tol;
  so.gap_tol = gap_tol;
  so.max_iters = max_iters;
  so.record_trace = false;
  const auto rep = solve_omega(problem, TiltParams(mu, lambda), so);
  ++diag.evaluations;
  if (!rep.converged) ++diag.unconverged_evaluations;
  return rep.converged ? rep.omega_value : rep.omega_lower;
}

/// Maximizes f(mu) = Omega(mu, lambda) - mu * delta - offset over mu >= 0.
/// The bracket starts at [0, 1] and doubles while f is still rising at its
/// right end (the maximizer then lies within 1% of it).
inline LambdaResult maximize_over_mu(const Problem& problem, double lambda, double delta, double mu_tol,
                                     double inner_tol_scale, const SearchOptions& opts) {
  LambdaResult res;
  auto& diag = res.diagnostics;
  auto f = [&](double mu, double width) {
    const double tol = inner_tolerance(opts, width) * inner_tol_scale;
    return omega_value(problem, mu, lambda, tol, opts.inner_gap_tol * inner_tol_scale, opts.max_iters, diag) -
           mu * delta;
  };

  if (delta == 0.0) {
    // Omega is nondecreasing in mu, so the supremum is only approached as
    // mu grows; report the value at the cap.
    diag.mu_at_cap = true;
    res.mu_star = opts.mu_cap;
    const auto before = diag.unconverged_evaluations;
    res.value = omega_value(problem, opts.mu_cap, lambda, opts.inner_tol * inner_tol_scale,
                            opts.inner_gap_tol * inner_tol_scale, opts.max_iters, diag);
    diag.all_converged = diag.unconverged_evaluations == before;
    return res;
  }

  double lo = 0.0, hi = 1.0;
  while (true) {
    const double at_hi = f(hi, hi - lo);
    const double near_hi = f(0.99 * hi, hi - lo);
    if (at_hi < near_hi) break;
    if (hi >= opts.mu_cap) {
      diag.mu_at_cap = true;
      break;
    }
    lo = 0.99 * hi;
    hi = std::min(2.0 * hi, opts.mu_cap);
    ++diag.bracket_expansions;
  }
  const auto g = golden_section_max(f, lo, hi, mu_tol);
  // Refine the maximizer at the final tolerance.
  res.mu_star = g.arg;
  const auto before = diag.unconverged_evaluations;
  const double refined = omega_value(problem, g.arg, lambda, opts.inner_tol * inner_tol_scale,
                                     opts.inner_gap_tol * inner_tol_scale, opts.max_iters, diag);
  diag.all_converged = diag.unconverged_evaluations == before;
  // The refined value is at least as accurate; never report less than the
  // best value seen during the search.
  res.value = std::max(refined - g.arg * delta, g.value);
  return res;
}

inline void require_finite_nonneg(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite and >= 0");
}

}  // namespace search_detail

/// Omega(mu, lambda) - lambda R - mu delta.
inline double g_mu_lambda(const Problem& problem, const OperatingPoint& point, const TiltParams& tilt,
                          const SearchOptions& opts = {}) {
  SolveOptions so;
  so.tol = opts.inner_tol;
  so.gap_tol = opts.inner_gap_tol;
  so.max_iters = opts.max_iters;
  so.record_trace = false;
  return solve_omega(problem, tilt, so).omega_value - tilt.lambda * point.rate - tilt.mu * point.delta;
}

/// max over mu >= 0 of G(mu, lambda). Flags mu_at_cap when the maximizer
/// runs into the bracket cap (expected for delta = 0).
inline LambdaResult g_lambda(const Problem& problem, const OperatingPoint& point, double lambda,
                             const SearchOptions& opts = {}) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  auto res = search_detail::maximize_over_mu(problem, lambda, point.delta, opts.mu_tol, 1.0, opts);
  res.value -= lambda * point.rate;
  return res;
}

/// G(R, delta | P) = max_lambda max_mu G(mu, lambda).
inline ExponentResult exponent(const Problem& problem, const OperatingPoint& point, const SearchOptions& opts = {}) {
  ExponentResult out;
  double best_value = -std::numeric_limits<double>::infinity();
  const auto g = golden_section_max(
      [&](double lambda, double) {
        const auto r = g_lambda(problem, point, lambda, opts);
        out.diagnostics.merge(r.diagnostics);
        if (r.value > best_value) {
          best_value = r.value;
          out.mu_star = r.mu_star;
        }
        return r.value;
      },
      0.0, 1.0, opts.lambda_tol);
  out.lambda_star = g.arg;
  out.value = g.value;
  // lambda = mu = 0 gives exactly zero, so a slightly negative value is rounding.
  if (out.value < 0.0 && out.value > -1e-8) out.value = 0.0;

  SolveOptions so;
  so.tol = opts.inner_tol;
  so.gap_tol = opts.inner_gap_tol;
  so.max_iters = opts.max_iters;
  out.inner = solve_omega(problem, TiltParams(out.mu_star, out.lambda_star), so);
  out.diagnostics.all_converged = out.inner.converged;
  return out;
}

/// R_cut(lambda)(delta | P) = max_mu { Omega(mu, lambda)/lambda - mu delta/lambda }.
///
/// The division by lambda amplifies inner errors, so the inner tolerance and
/// the mu tolerance are both scaled by lambda.
inline CutoffResult cutoff_rate(const Problem& problem, double delta, double lambda, const SearchOptions& opts = {}) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in (0, 1]");
  search_detail::require_finite_nonneg(delta, "delta");
  auto r = search_detail::maximize_over_mu(problem, lambda, delta, opts.mu_tol * lambda, lambda, opts);
  CutoffResult out;
  out.value = std::max(r.value / lambda, 0.0);
  out.mu_star = r.mu_star;
  out.lambda = lambda;
  out.diagnostics = r.diagnostics;
  return out;
}

/// Largest lambda for which the approximation bound is certified: 1/(8 alpha)
/// with alpha = min(log|X|, log|Y|).
inline double rd_certified_lambda_cap(const Problem& problem) {
  const double alpha = std::min(std::log(static_cast<double>(problem.x_size())),
                                std::log(static_cast<double>(problem.y_size())));
  return alpha > 0.0 ? 1.0 / (8.0 * alpha) : 0.0;
}

/// Cutoff rate as an approximation of R(delta|P) from below, with the bound
///   R - R_cut <= c1 sqrt(lambda) (log(1/lambda) + c2),
///   c1 = 1.5 sqrt(2 alpha),
///   c2 = (4/3) log(|X||Y|) - log(2 alpha) + (2/3) d_max |R'(delta)|.
/// R'(delta) is a central difference of Blahut's rate-distortion iteration.
inline RdApproxResult rd_approx(const Problem& problem, double delta, double lambda, const SearchOptions& opts = {}) {
  RdApproxResult out;
  out.cutoff = cutoff_rate(problem, delta, lambda, opts);
  out.approx = out.cutoff.value;
  out.lambda = lambda;

  const double nx = static_cast<double>(problem.x_size()), ny = static_cast<double>(problem.y_size());
  const double d_max = problem.distortion.d_max();
  out.alpha = std::min(std::log(nx), std::log(ny));

  const double h = std::max(1e-4, delta * 1e-3);
  const double lo = std::max(0.0, delta - h);
  const double hi = delta + h;
  out.derivative = (ba_rate_distortion(problem, hi) - ba_rate_distortion(problem, lo)) / (hi - lo);

  if (out.alpha > 0.0) {
    out.c1 = 1.5 * std::sqrt(2.0 * out.alpha);
    out.c2 = (4.0 / 3.0) * std::log(nx * ny) - std::log(2.0 * out.alpha) +
             (2.0 / 3.0) * d_max * std::abs(out.derivative);
    out.bound = out.c1 * std::sqrt(lambda) * (std::log(1.0 / lambda) + out.c2);
  }
  out.certified = out.alpha > 0.0 && lambda <= 1.0 / (8.0 * out.alpha) && delta > 0.0 && delta < d_max &&
                  std::isfinite(out.derivative) && out.bound >= 0.0;
  return out;
}

}  // namespace cdexp
