// Hand-rolled generators for the property tests. Fixed seeds keep every run
// reproducible.
#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "cdexp/prob.hpp"

namespace cdexp::gen {

using Rng = std::mt19937_64;

/// Uniform draw from the simplex (normalized exponentials), optionally
/// floored away from zero.
inline std::vector<double> random_simplex(Rng& rng, std::size_t n, double floor = 0.0) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(n);
  double sum = 0.0;
  for (double& x : v) {
    x = e(rng) + floor;
    sum += x;
  }
  for (double& x : v) x /= sum;
  // Push the rounding residue into the largest entry so the sum is exact enough.
  double total = 0.0;
  for (double x : v) total += x;
  auto it = std::max_element(v.begin(), v.end());
  *it += 1.0 - total;
  return v;
}

inline JointPmf random_joint(Rng& rng, std::size_t rows, std::size_t cols, double floor = 1e-3) {
  return JointPmf(rows, cols, random_simplex(rng, rows * cols, floor));
}

/// Random distortion in [0, 1] with a zero in every row.
inline DistortionTable random_distortion(Rng& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> d(rows * cols);
  for (double& v : d) v = u(rng);
  for (std::size_t x = 0; x < rows; ++x) d[x * cols + (x % cols)] = 0.0;
  return DistortionTable(rows, cols, std::move(d));
}

inline Problem random_problem(Rng& rng, std::size_t rows, std::size_t cols) {
  return validate_problem(SourcePmf(random_simplex(rng, rows, 0.05)), random_distortion(rng, rows, cols));
}

inline Problem binary_hamming(double p) {
  return validate_problem(SourcePmf({p, 1.0 - p}), DistortionTable::hamming(2));
}

}  // namespace cdexp::gen
