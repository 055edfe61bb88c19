// Two-argument surrogate F(p,q) = E_q[omega_p] + D(q||p).
//
// Not used by the solver itself (which only needs F(q,q) and F(q, q_next) =
// -log Lambda_q). Kept separate so tests can assert the two alternating
// minimization inequalities directly.
#pragma once

#include <cmath>

#include "cdexp/engine.hpp"

namespace cdexp {

/// p must be strictly positive on supp(P)×Y; q may have zeros.
inline double surrogate(const JointPmf& p, const JointPmf& q, const Problem& problem, const TiltParams& tilt) {
  const auto omega_p = omega_table(p, problem, tilt);
  double expectation = 0.0;
  for (std::size_t i = 0; i < q.cells().size(); ++i) {
    const double v = q.cells()[i];
    if (v <= 0.0) continue;
    if (std::isinf(omega_p.values[i])) throw SupportError("q places mass outside the source support");
    expectation += v * omega_p.values[i];
  }
  return expectation + detail::cell_kl(q.cells(), p.cells());
}

}  // namespace cdexp
