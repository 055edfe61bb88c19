// Probability-simplex primitives over finite alphabets.
//
// All information quantities are in nats. The 0 log 0 = 0 convention is used
// throughout.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cdexp {

inline constexpr double kSumTolerance = 1e-12;

/// Raised when an input violates a probability or distortion invariant. The
/// `field` names the offending item, e.g. "source[1]" or "distortion[0][2]".
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

namespace detail {

inline std::string cell_name(const char* table, std::size_t x, std::size_t y) {
  return std::string(table) + "[" + std::to_string(x) + "][" + std::to_string(y) + "]";
}

inline double xlogy_ratio(double p, double q) {
  if (p <= 0.0) return 0.0;
  if (q <= 0.0) return std::numeric_limits<double>::infinity();
  return p * std::log(p / q);
}

}  // namespace detail

class SourcePmf {
 public:
  explicit SourcePmf(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ValidationError("source", "empty alphabet");
    double sum = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      const double p = probs_[i];
      if (!std::isfinite(p) || p < 0.0) {
        throw ValidationError("source[" + std::to_string(i) + "]",
                              "probability must be finite and nonnegative");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw ValidationError("source", "not a distribution (sum = " + std::to_string(sum) + ")");
    }
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

 private:
  std::vector<double> probs_;
};

/// Joint distribution over X×Y stored row-major (rows indexed by x).
class JointPmf {
 public:
  JointPmf(std::size_t rows, std::size_t cols, std::vector<double> cells)
      : rows_(rows), cols_(cols), cells_(std::move(cells)) {
    if (rows_ == 0 || cols_ == 0) throw ValidationError("joint", "empty alphabet");
    if (cells_.size() != rows_ * cols_) throw ValidationError("joint", "cell count does not match shape");
    double sum = 0.0;
    for (std::size_t x = 0; x < rows_; ++x) {
      for (std::size_t y = 0; y < cols_; ++y) {
        const double v = at(x, y);
        if (!std::isfinite(v) || v < 0.0) {
          throw ValidationError(detail::cell_name("joint", x, y), "probability must be finite and nonnegative");
        }
        sum += v;
      }
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw ValidationError("joint", "not a distribution (sum = " + std::to_string(sum) + ")");
    }
  }

  static JointPmf from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ValidationError("joint", "empty alphabet");
    std::vector<double> cells;
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw ValidationError("joint", "ragged rows");
      cells.insert(cells.end(), r.begin(), r.end());
    }
    return JointPmf(rows.size(), rows.front().size(), std::move(cells));
  }

  static JointPmf uniform(std::size_t rows, std::size_t cols) {
    return JointPmf(rows, cols, std::vector<double>(rows * cols, 1.0 / static_cast<double>(rows * cols)));
  }

  /// Product distribution px ⊗ py.
  static JointPmf product(std::span<const double> px, std::span<const double> py) {
    std::vector<double> cells;
    cells.reserve(px.size() * py.size());
    for (double a : px)
      for (double b : py) cells.push_back(a * b);
    return JointPmf(px.size(), py.size(), std::move(cells));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double at(std::size_t x, std::size_t y) const { return cells_[x * cols_ + y]; }
  std::span<const double> cells() const noexcept { return cells_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> cells_;
};

class DistortionTable {
 public:
  DistortionTable(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows_ == 0 || cols_ == 0) throw ValidationError("distortion", "empty table");
    if (values_.size() != rows_ * cols_) throw ValidationError("distortion", "cell count does not match shape");
    zero_row_ = true;
    for (std::size_t x = 0; x < rows_; ++x) {
      bool row_has_zero = false;
      for (std::size_t y = 0; y < cols_; ++y) {
        const double v = at(x, y);
        if (!std::isfinite(v) || v < 0.0) {
          throw ValidationError(detail::cell_name("distortion", x, y), "distortion must be finite and nonnegative");
        }
        d_max_ = std::max(d_max_, v);
        row_has_zero = row_has_zero || v == 0.0;
      }
      zero_row_ = zero_row_ && row_has_zero;
    }
  }

  static DistortionTable from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ValidationError("distortion", "empty table");
    std::vector<double> cells;
    for (std::size_t x = 0; x < rows.size(); ++x) {
      if (rows[x].size() != rows.front().size()) {
        throw ValidationError("distortion[" + std::to_string(x) + "]", "ragged row");
      }
      cells.insert(cells.end(), rows[x].begin(), rows[x].end());
    }
    return DistortionTable(rows.size(), rows.front().size(), std::move(cells));
  }

  /// 0/1 distortion on an n×n alphabet.
  static DistortionTable hamming(std::size_t n) {
    std::vector<double> cells(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i) cells[i * n + i] = 0.0;
    return DistortionTable(n, n, std::move(cells));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double at(std::size_t x, std::size_t y) const { return values_[x * cols_ + y]; }
  std::span<const double> values() const noexcept { return values_; }
  double d_max() const noexcept { return d_max_; }
  /// True iff every source symbol has a zero-distortion reproduction.
  bool zero_row_property() const noexcept { return zero_row_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
  double d_max_ = 0.0;
  bool zero_row_ = true;
};

struct Problem {
  SourcePmf source;
  DistortionTable distortion;
  std::vector<std::string> labels_x;
  std::vector<std::string> labels_y;

  std::size_t x_size() const noexcept { return distortion.rows(); }
  std::size_t y_size() const noexcept { return distortion.cols(); }
  bool zero_row_property() const noexcept { return distortion.zero_row_property(); }
};

/// Checks shape agreement and label counts. The zero-row property is only
/// recorded: the iteration runs without it.
inline Problem validate_problem(SourcePmf source, DistortionTable distortion,
                                std::vector<std::string> labels_x = {},
                                std::vector<std::string> labels_y = {}) {
  if (source.size() != distortion.rows()) {
    throw ValidationError("distortion", "has " + std::to_string(distortion.rows()) +
                                            " rows but the source alphabet has " +
                                            std::to_string(source.size()) + " symbols");
  }
  if (!labels_x.empty() && labels_x.size() != distortion.rows()) {
    throw ValidationError("labels_x", "length does not match the source alphabet");
  }
  if (!labels_y.empty() && labels_y.size() != distortion.cols()) {
    throw ValidationError("labels_y", "length does not match the reproduction alphabet");
  }
  return Problem{std::move(source), std::move(distortion), std::move(labels_x), std::move(labels_y)};
}

struct Marginals {
  std::vector<double> x;
  std::vector<double> y;
};

inline Marginals marginals(const JointPmf& q) {
  Marginals m{std::vector<double>(q.rows(), 0.0), std::vector<double>(q.cols(), 0.0)};
  for (std::size_t x = 0; x < q.rows(); ++x) {
    for (std::size_t y = 0; y < q.cols(); ++y) {
      m.x[x] += q.at(x, y);
      m.y[y] += q.at(x, y);
    }
  }
  return m;
}

/// q_{X|Y}. Columns whose q_Y mass is zero are undefined and must not be read.
class ConditionalTable {
 public:
  ConditionalTable(std::size_t rows, std::size_t cols, std::vector<double> values, std::vector<bool> defined)
      : rows_(rows), cols_(cols), values_(std::move(values)), defined_(std::move(defined)) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool column_defined(std::size_t y) const { return defined_[y]; }
  double at(std::size_t x, std::size_t y) const {
    if (!defined_[y]) throw std::out_of_range("conditional column " + std::to_string(y) + " is undefined");
    return values_[x * cols_ + y];
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
  std::vector<bool> defined_;
};

inline ConditionalTable conditional_x_given_y(const JointPmf& q) {
  const auto m = marginals(q);
  std::vector<double> values(q.rows() * q.cols(), std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> defined(q.cols(), false);
  for (std::size_t y = 0; y < q.cols(); ++y) {
    if (m.y[y] <= 0.0) continue;
    defined[y] = true;
    for (std::size_t x = 0; x < q.rows(); ++x) values[x * q.cols() + y] = q.at(x, y) / m.y[y];
  }
  return ConditionalTable(q.rows(), q.cols(), std::move(values), std::move(defined));
}

/// D(p||q) in nats; +inf when p is not absolutely continuous w.r.t. q.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += detail::xlogy_ratio(p[i], q[i]);
  // Rounding can leave a tiny negative residue when p == q.
  return std::max(sum, 0.0);
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

inline double mutual_information(const JointPmf& q) {
  const auto m = marginals(q);
  double sum = 0.0;
  for (std::size_t x = 0; x < q.rows(); ++x) {
    for (std::size_t y = 0; y < q.cols(); ++y) {
      const double v = q.at(x, y);
      if (v > 0.0) sum += v * std::log(v / (m.x[x] * m.y[y]));
    }
  }
  return std::max(sum, 0.0);
}

inline double expected_distortion(const JointPmf& q, const DistortionTable& d) {
  if (q.rows() != d.rows() || q.cols() != d.cols()) {
    throw std::invalid_argument("expected_distortion: shape mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < q.cells().size(); ++i) sum += q.cells()[i] * d.values()[i];
  return sum;
}

}  // namespace cdexp
