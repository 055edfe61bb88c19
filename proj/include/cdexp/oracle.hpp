// Brute-force and closed-form reference computations.
//
// None of these call into the updating iteration: they exist to certify it.
// Grid searches enumerate compositions of n = round(1/step) and evaluate the
// objectives directly from prob.hpp functionals.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdexp/prob.hpp"

namespace cdexp {

/// Raised when an oracle is asked to enumerate a grid that is too large.
class OversizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OperatingPoint {
  double rate = 0.0;   // R, nats
  double delta = 0.0;  // distortion level

  OperatingPoint() = default;
  OperatingPoint(double rate_, double delta_) : rate(rate_), delta(delta_) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) throw std::invalid_argument("rate must be finite and >= 0");
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw std::invalid_argument("delta must be finite and >= 0");
  }
};

struct GridSpec {
  double step = 5e-3;
  /// Feasibility slack for E[d] <= delta; defaults to step * d_max.
  std::optional<double> slack;

  double resolved_slack(double d_max) const { return slack.value_or(step * d_max); }
  std::size_t divisions() const {
    if (!(step > 0.0 && step <= 0.1)) throw std::invalid_argument("grid step must lie in (0, 0.1]");
    return static_cast<std::size_t>(std::llround(1.0 / step));
  }
};

struct BaOptions {
  double tol = 1e-8;
  std::size_t max_iters = 200000;
};

namespace oracle_detail {

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

struct BaPoint {
  double distortion = 0.0;
  double rate = 0.0;
};

/// Blahut's fixed-slope iteration: W(y|x) ∝ q_Y(y) exp(-s d(x,y)),
/// q_Y = P W. With `s` infinite, W is restricted to each row's
/// minimum-distortion cells. q_Y is updated in place as a warm start.
inline BaPoint blahut_at_slope(std::span<const double> source, const DistortionTable& d, double s,
                               std::vector<double>& q_y, const BaOptions& opts) {
  const std::size_t nx = d.rows(), ny = d.cols();
  const bool hard = std::isinf(s);
  std::vector<double> row_min(nx, std::numeric_limits<double>::infinity());
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) row_min[x] = std::min(row_min[x], d.at(x, y));

  std::vector<double> w(nx * ny, 0.0);
  auto fill_channel = [&] {
    for (std::size_t x = 0; x < nx; ++x) {
      double shift = -std::numeric_limits<double>::infinity();
      std::vector<double> logits(ny, -std::numeric_limits<double>::infinity());
      for (std::size_t y = 0; y < ny; ++y) {
        if (q_y[y] <= 0.0) continue;
        if (hard) {
          if (d.at(x, y) == row_min[x]) logits[y] = std::log(q_y[y]);
        } else {
          logits[y] = std::log(q_y[y]) - s * (d.at(x, y) - row_min[x]);
        }
        shift = std::max(shift, logits[y]);
      }
      double z = 0.0;
      for (std::size_t y = 0; y < ny; ++y) {
        w[x * ny + y] = std::isinf(logits[y]) ? 0.0 : std::exp(logits[y] - shift);
        z += w[x * ny + y];
      }
      for (std::size_t y = 0; y < ny; ++y) w[x * ny + y] /= z;
    }
  };

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    fill_channel();
    double change = 0.0;
    std::vector<double> next(ny, 0.0);
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) next[y] += source[x] * w[x * ny + y];
    for (std::size_t y = 0; y < ny; ++y) change = std::max(change, std::abs(next[y] - q_y[y]));
    q_y = next;
    if (change < opts.tol * 1e-6) break;
  }
  fill_channel();

  std::vector<double> out(ny, 0.0);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) out[y] += source[x] * w[x * ny + y];
  BaPoint pt;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      const double joint = source[x] * w[x * ny + y];
      if (joint <= 0.0) continue;
      pt.distortion += joint * d.at(x, y);
      pt.rate += joint * std::log(w[x * ny + y] / out[y]);
    }
  }
  pt.rate = std::max(pt.rate, 0.0);
  return pt;
}

/// Calls `visit` with every composition of n into k nonnegative parts.
inline void for_each_composition(std::size_t n, std::size_t k,
                                 const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> parts(k, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t idx, std::size_t remaining) {
    if (idx + 1 == k) {
      parts[idx] = remaining;
      visit(parts);
      return;
    }
    for (std::size_t v = 0; v <= remaining; ++v) {
      parts[idx] = v;
      rec(idx + 1, remaining - v);
    }
  };
  rec(0, n);
}

inline bool is_binary_hamming(const DistortionTable& d) {
  return d.rows() == 2 && d.cols() == 2 && d.at(0, 0) == 0.0 && d.at(1, 1) == 0.0 && d.at(0, 1) == 1.0 &&
         d.at(1, 0) == 1.0;
}

}  // namespace oracle_detail

/// h(min(p,1-p)) - h(delta) for delta below min(p,1-p), otherwise 0. Nats.
inline double analytic_binary_hamming_rd(double p, double delta) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must lie in (0, 1)");
  if (delta < 0.0) throw std::invalid_argument("delta must be >= 0");
  const double pm = std::min(p, 1.0 - p);
  if (delta >= pm) return 0.0;
  return oracle_detail::binary_entropy(pm) - oracle_detail::binary_entropy(delta);
}

/// R(delta | source) for an arbitrary (possibly zero-containing) source
/// vector. Returns +inf when delta is below the least achievable distortion.
inline double ba_rate_distortion(std::span<const double> source, const DistortionTable& d, double delta,
                                 const BaOptions& opts = {}) {
  if (delta < 0.0) throw std::invalid_argument("delta must be >= 0");
  if (source.size() != d.rows()) throw std::invalid_argument("source/distortion shape mismatch");
  const std::size_t nx = d.rows(), ny = d.cols();

  // Zero rate is reachable iff a single reproduction symbol meets delta.
  double zero_rate_distortion = std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < ny; ++y) {
    double e = 0.0;
    for (std::size_t x = 0; x < nx; ++x) e += source[x] * d.at(x, y);
    zero_rate_distortion = std::min(zero_rate_distortion, e);
  }
  if (delta >= zero_rate_distortion) return 0.0;

  double min_distortion = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t y = 0; y < ny; ++y) m = std::min(m, d.at(x, y));
    min_distortion += source[x] * m;
  }
  const double boundary_tol = 1e-12;
  if (delta < min_distortion - boundary_tol) return std::numeric_limits<double>::infinity();

  std::vector<double> q_y(ny, 1.0 / static_cast<double>(ny));
  if (delta <= min_distortion + boundary_tol) {
    return oracle_detail::blahut_at_slope(source, d, std::numeric_limits<double>::infinity(), q_y, opts).rate;
  }

  // Distortion is nonincreasing in the slope; bisect for E[d] = delta.
  double lo = 0.0, hi = 1e4;
  auto hi_pt = oracle_detail::blahut_at_slope(source, d, hi, q_y, opts);
  if (hi_pt.distortion > delta) {
    // Target sits between the minimum distortion and what slope 1e4 reaches.
    std::vector<double> q_hard(ny, 1.0 / static_cast<double>(ny));
    return oracle_detail::blahut_at_slope(source, d, std::numeric_limits<double>::infinity(), q_hard, opts)
        .rate;
  }
  oracle_detail::BaPoint best = hi_pt;
  double best_s = hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto pt = oracle_detail::blahut_at_slope(source, d, mid, q_y, opts);
    if (std::abs(pt.distortion - delta) < std::abs(best.distortion - delta)) {
      best = pt;
      best_s = mid;
    }
    if (std::abs(pt.distortion - delta) <= 1e-12 || hi - lo < 1e-13) break;
    if (pt.distortion > delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // The curve has slope -s at the computed point.
  return std::max(best.rate + best_s * (best.distortion - delta), 0.0);
}

inline double ba_rate_distortion(const Problem& problem, double delta, const BaOptions& opts = {}) {
  return ba_rate_distortion(problem.source.probs(), problem.distortion, delta, opts);
}

/// min over a q_X grid of |R(delta|q_X) - R|^+ + D(q_X||P). The inner rate
/// distortion function is analytic on 0/1 binary problems and Blahut's
/// iteration otherwise. |X| <= 3.
inline double grid_gck(const Problem& problem, const OperatingPoint& point, const GridSpec& grid = {1e-4, {}}) {
  const std::size_t nx = problem.x_size();
  if (nx > 3) throw OversizeError("grid_gck supports at most 3 source symbols");
  const std::size_t n = grid.divisions();
  const bool binary_hamming = oracle_detail::is_binary_hamming(problem.distortion);
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> qx(nx);
  oracle_detail::for_each_composition(n, nx, [&](const std::vector<std::size_t>& parts) {
    for (std::size_t i = 0; i < nx; ++i) qx[i] = static_cast<double>(parts[i]) / static_cast<double>(n);
    const double div = kl_divergence(qx, problem.source.probs());
    if (std::isinf(div) || div >= best) return;
    double rd;
    if (binary_hamming) {
      rd = (qx[0] <= 0.0 || qx[0] >= 1.0) ? 0.0 : analytic_binary_hamming_rd(qx[0], point.delta);
    } else {
      rd = ba_rate_distortion(qx, problem.distortion, point.delta);
    }
    best = std::min(best, std::max(rd - point.rate, 0.0) + div);
  });
  return best;
}

namespace oracle_detail {

template <typename Objective>
double joint_grid_min(const Problem& problem, const GridSpec& grid, Objective&& objective) {
  const std::size_t nx = problem.x_size(), ny = problem.y_size();
  if (nx * ny > 4) throw OversizeError("joint grid oracles support at most 4 cells");
  const std::size_t n = grid.divisions();
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> cells(nx * ny);
  for_each_composition(n, nx * ny, [&](const std::vector<std::size_t>& parts) {
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<double>(parts[i]) / static_cast<double>(n);
    // Integer compositions sum to one up to rounding; rescale exactly.
    double s = 0.0;
    for (double v : cells) s += v;
    for (double& v : cells) v /= s;
    const JointPmf q(nx, ny, cells);
    best = std::min(best, objective(q));
  });
  return best;
}

}  // namespace oracle_detail

/// min over a joint grid with E[d] <= delta + slack of |I - R|^+ + D(q_X||P).
/// +inf when no grid point is feasible.
inline double grid_joint_g(const Problem& problem, const OperatingPoint& point, const GridSpec& grid = {}) {
  const double limit = point.delta + grid.resolved_slack(problem.distortion.d_max());
  return oracle_detail::joint_grid_min(problem, grid, [&](const JointPmf& q) {
    if (expected_distortion(q, problem.distortion) > limit) return std::numeric_limits<double>::infinity();
    const auto m = marginals(q);
    const double div = kl_divergence(m.x, problem.source.probs());
    return std::max(mutual_information(q) - point.rate, 0.0) + div;
  });
}

/// min over a joint grid of lambda I + D(q_X||P) + mu E[d].
inline double grid_omega(const Problem& problem, double mu, double lambda, const GridSpec& grid = {}) {
  return oracle_detail::joint_grid_min(problem, grid, [&](const JointPmf& q) {
    const auto m = marginals(q);
    const double div = kl_divergence(m.x, problem.source.probs());
    return lambda * mutual_information(q) + div + mu * expected_distortion(q, problem.distortion);
  });
}

}  // namespace cdexp
