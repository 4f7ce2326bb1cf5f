#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "crfdepth/error.hpp"
#include "crfdepth/io.hpp"

namespace crfdepth {

using Vector = std::vector<double>;

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

// Compressed sparse row storage. Columns within a row are strictly
// increasing and no explicit zeros are stored.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  static SparseMatrix from_triplets(int n_rows, int n_cols, std::vector<Triplet> entries) {
    if (n_rows < 0 || n_cols < 0) throw ValidationError("solver", "negative matrix dimension");
    for (const auto& t : entries) {
      if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols) {
        throw ValidationError("solver", "triplet (" + std::to_string(t.row) + ", " +
                                            std::to_string(t.col) + ") out of range");
      }
    }
    // Stable sort keeps duplicate summation in input order for equal keys.
    std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    SparseMatrix m;
    m.n_rows_ = n_rows;
    m.n_cols_ = n_cols;
    m.row_offsets_.assign(static_cast<std::size_t>(n_rows) + 1, 0);
    std::size_t i = 0;
    while (i < entries.size()) {
      const int r = entries[i].row;
      const int c = entries[i].col;
      double sum = 0.0;
      while (i < entries.size() && entries[i].row == r && entries[i].col == c) sum += entries[i++].value;
      if (sum != 0.0) {
        m.col_indices_.push_back(c);
        m.values_.push_back(sum);
        ++m.row_offsets_[static_cast<std::size_t>(r) + 1];
      }
    }
    std::partial_sum(m.row_offsets_.begin(), m.row_offsets_.end(), m.row_offsets_.begin());
    return m;
  }

  static SparseMatrix identity(int n) {
    std::vector<Triplet> t;
    for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  int rows() const { return n_rows_; }
  int cols() const { return n_cols_; }
  std::size_t nnz() const { return values_.size(); }
  bool square() const { return n_rows_ == n_cols_; }

  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const int> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  double at(int r, int c) const {
    const auto b = col_indices_.begin() + static_cast<long>(row_offsets_[static_cast<std::size_t>(r)]);
    const auto e = col_indices_.begin() + static_cast<long>(row_offsets_[static_cast<std::size_t>(r) + 1]);
    const auto it = std::lower_bound(b, e, c);
    return (it != e && *it == c) ? values_[static_cast<std::size_t>(it - col_indices_.begin())] : 0.0;
  }

  Vector diagonal() const {
    Vector d(static_cast<std::size_t>(std::min(n_rows_, n_cols_)), 0.0);
    for (int i = 0; i < static_cast<int>(d.size()); ++i) d[static_cast<std::size_t>(i)] = at(i, i);
    return d;
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (int r = 0; r < n_rows_; ++r) {
      for (auto k = row_offsets_[static_cast<std::size_t>(r)]; k < row_offsets_[static_cast<std::size_t>(r) + 1]; ++k) {
        out.push_back({r, col_indices_[k], values_[k]});
      }
    }
    return out;
  }

  SparseMatrix transpose() const {
    auto t = triplets();
    for (auto& e : t) std::swap(e.row, e.col);
    return from_triplets(n_cols_, n_rows_, std::move(t));
  }

  // Row-major dense copy, for tests and the direct oracle.
  std::vector<double> to_dense() const {
    std::vector<double> d(static_cast<std::size_t>(n_rows_) * n_cols_, 0.0);
    for (const auto& e : triplets()) d[static_cast<std::size_t>(e.row) * n_cols_ + e.col] = e.value;
    return d;
  }

 private:
  int n_rows_ = 0;
  int n_cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<int> col_indices_;
  std::vector<double> values_;
};

inline SparseMatrix from_triplets(int n_rows, int n_cols, std::vector<Triplet> entries) {
  return SparseMatrix::from_triplets(n_rows, n_cols, std::move(entries));
}

// Sums each row in ascending column order.
inline void spmv_into(const SparseMatrix& m, std::span<const double> x, std::span<double> y) {
  if (x.size() != static_cast<std::size_t>(m.cols()) || y.size() != static_cast<std::size_t>(m.rows())) {
    throw ValidationError("solver", "spmv dimension mismatch");
  }
  const auto off = m.row_offsets();
  const auto cols = m.col_indices();
  const auto vals = m.values();
  for (std::size_t r = 0; r < y.size(); ++r) {
    double s = 0.0;
    for (auto k = off[r]; k < off[r + 1]; ++k) s += vals[k] * x[static_cast<std::size_t>(cols[k])];
    y[r] = s;
  }
}

inline Vector spmv(const SparseMatrix& m, std::span<const double> x) {
  Vector y(static_cast<std::size_t>(m.rows()));
  spmv_into(m, x, y);
  return y;
}

// C = A^T A for a (rows x n) matrix A, returned as n x n.
inline SparseMatrix gram(const SparseMatrix& a) {
  std::vector<Triplet> t;
  const auto off = a.row_offsets();
  const auto cols = a.col_indices();
  const auto vals = a.values();
  for (int r = 0; r < a.rows(); ++r) {
    for (auto p = off[static_cast<std::size_t>(r)]; p < off[static_cast<std::size_t>(r) + 1]; ++p) {
      for (auto q = off[static_cast<std::size_t>(r)]; q < off[static_cast<std::size_t>(r) + 1]; ++q) {
        t.push_back({cols[p], cols[q], vals[p] * vals[q]});
      }
    }
  }
  return from_triplets(a.cols(), a.cols(), std::move(t));
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace detail

struct SolveReport {
  Vector x;
  int iterations = 0;
  double final_residual_norm = 0.0;  // ||b - A x||, recomputed from x
  bool converged = false;
  bool numerical_error = false;  // NaN/Inf met during the recurrence
  int restarts = 0;
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 10000;
  SolverMethod method = SolverMethod::kCgs;
  Preconditioner preconditioner = Preconditioner::kNone;
};

inline constexpr double kBreakdownThreshold = 1e-300;

namespace detail {

inline Vector residual(const SparseMatrix& a, std::span<const double> b, std::span<const double> x) {
  Vector r = spmv(a, x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return r;
}

inline Vector jacobi_inverse(const SparseMatrix& a, Preconditioner pc) {
  Vector inv(static_cast<std::size_t>(a.rows()), 1.0);
  if (pc == Preconditioner::kJacobi) {
    const auto d = a.diagonal();
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = d[i] != 0.0 ? 1.0 / d[i] : 1.0;
  }
  return inv;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

enum class Outcome { kConverged, kBudget, kBreakdown, kNan };

// Conjugate Gradient Squared (Sonneveld) with optional diagonal
// preconditioning; shadow residual r~ = r0. Two products with A per step.
inline Outcome cgs_run(const SparseMatrix& a, std::span<const double> b, Vector& x, double target,
                       int budget, const Vector& minv, int& iterations) {
  const auto n = x.size();
  Vector r = residual(a, b, x);
  if (norm2(r) <= target) return Outcome::kConverged;
  const Vector shadow = r;
  Vector u(n), p(n), q(n, 0.0), v(n), uq(n), tmp(n);
  double rho_prev = 1.0;
  for (int it = 0; it < budget; ++it) {
    const double rho = dot(shadow, r);
    if (!std::isfinite(rho)) return Outcome::kNan;
    if (std::abs(rho) < kBreakdownThreshold) return Outcome::kBreakdown;
    if (it == 0) {
      u = r;
      p = u;
    } else {
      const double beta = rho / rho_prev;
      for (std::size_t i = 0; i < n; ++i) {
        u[i] = r[i] + beta * q[i];
        p[i] = u[i] + beta * (q[i] + beta * p[i]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) tmp[i] = minv[i] * p[i];
    spmv_into(a, tmp, v);
    const double sigma = dot(shadow, v);
    if (!std::isfinite(sigma)) return Outcome::kNan;
    if (std::abs(sigma) < kBreakdownThreshold) return Outcome::kBreakdown;
    const double alpha = rho / sigma;
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = u[i] - alpha * v[i];
      uq[i] = minv[i] * (u[i] + q[i]);
      x[i] += alpha * uq[i];
    }
    spmv_into(a, uq, tmp);
    for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * tmp[i];
    ++iterations;
    rho_prev = rho;
    const double rn = norm2(r);
    if (!std::isfinite(rn)) return Outcome::kNan;
    if (rn <= target) return Outcome::kConverged;
  }
  return Outcome::kBudget;
}

// Preconditioned conjugate gradient, for comparison runs on SPD systems.
inline Outcome cg_run(const SparseMatrix& a, std::span<const double> b, Vector& x, double target,
                      int budget, const Vector& minv, int& iterations) {
  const auto n = x.size();
  Vector r = residual(a, b, x);
  if (norm2(r) <= target) return Outcome::kConverged;
  Vector z(n), p(n), ap(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = minv[i] * r[i];
  p = z;
  double rz = dot(r, z);
  for (int it = 0; it < budget; ++it) {
    spmv_into(a, p, ap);
    const double pap = dot(p, ap);
    if (!std::isfinite(pap)) return Outcome::kNan;
    if (std::abs(pap) < kBreakdownThreshold) return Outcome::kBreakdown;
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    ++iterations;
    const double rn = norm2(r);
    if (!std::isfinite(rn)) return Outcome::kNan;
    if (rn <= target) return Outcome::kConverged;
    for (std::size_t i = 0; i < n; ++i) z[i] = minv[i] * r[i];
    const double rz_next = dot(r, z);
    if (std::abs(rz) < kBreakdownThreshold) return Outcome::kBreakdown;
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return Outcome::kBudget;
}

}  // namespace detail

// Iterates from x0 until ||b - A x|| <= tol * ||b|| or max_iter products
// pairs are spent. Convergence is always confirmed on the true residual; a
// breakdown or a drifted recurrence residual restarts from the current
// iterate, at most once for breakdowns.
inline SolveReport solve(const SparseMatrix& a, std::span<const double> b, std::span<const double> x0,
                         const SolverOptions& opt) {
  if (!a.square()) throw ValidationError("solver", "matrix must be square");
  if (b.size() != static_cast<std::size_t>(a.rows()) || x0.size() != b.size()) {
    throw ValidationError("solver", "right-hand side or initial guess has wrong length");
  }
  if (!(opt.tol > 0.0)) throw ValidationError("solver", "tolerance must be > 0");
  if (opt.max_iter < 0) throw ValidationError("solver", "max_iter must be >= 0");

  SolveReport rep;
  rep.x.assign(x0.begin(), x0.end());
  const double bnorm = detail::norm2(b);
  const double target = opt.tol * bnorm;
  const Vector minv = detail::jacobi_inverse(a, opt.preconditioner);

  int breakdown_restarts = 0;
  int drift_restarts = 0;
  while (true) {
    const int budget = opt.max_iter - rep.iterations;
    const auto outcome = opt.method == SolverMethod::kCgs
                             ? detail::cgs_run(a, b, rep.x, target, budget, minv, rep.iterations)
                             : detail::cg_run(a, b, rep.x, target, budget, minv, rep.iterations);
    if (outcome == detail::Outcome::kNan || !detail::all_finite(rep.x)) {
      rep.numerical_error = true;
      break;
    }
    const double true_res = detail::norm2(detail::residual(a, b, rep.x));
    if (true_res <= target) break;
    if (rep.iterations >= opt.max_iter) break;
    if (outcome == detail::Outcome::kBreakdown) {
      if (breakdown_restarts++ >= 1) break;
    } else if (outcome == detail::Outcome::kConverged) {
      // recurrence residual drifted from the true one
      if (drift_restarts++ >= 8) break;
    } else {
      break;
    }
    ++rep.restarts;
  }
  rep.final_residual_norm = detail::norm2(detail::residual(a, b, rep.x));
  rep.converged = !rep.numerical_error && std::isfinite(rep.final_residual_norm) &&
                  rep.final_residual_norm <= target;
  return rep;
}

inline SolveReport cgs_solve(const SparseMatrix& a, std::span<const double> b, std::span<const double> x0,
                             double tol, int max_iter,
                             Preconditioner pc = Preconditioner::kNone) {
  return solve(a, b, x0, {tol, max_iter, SolverMethod::kCgs, pc});
}

inline constexpr int kDenseSolveMaxSize = 2000;

// Gaussian elimination with partial pivoting on a row-major n x n matrix.
// Test oracle only.
inline Vector dense_solve(std::vector<double> a, Vector b) {
  const auto n = b.size();
  if (a.size() != n * n) throw ValidationError("solver", "dense matrix is not n x n");
  if (n > static_cast<std::size_t>(kDenseSolveMaxSize)) {
    throw ValidationError("solver", "dense_solve is limited to n <= 2000");
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a[i * n + k]) > std::abs(a[piv * n + k])) piv = i;
    }
    if (std::abs(a[piv * n + k]) < 1e-12) {
      throw SingularSystemError("solver", "pivot below 1e-12 in column " + std::to_string(k),
                                static_cast<long>(k));
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / a[k * n + k];
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      b[i] -= f * b[k];
    }
  }
  Vector x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
    x[i] = s / a[i * n + i];
  }
  return x;
}

inline Vector dense_solve(const SparseMatrix& a, std::span<const double> b) {
  return dense_solve(a.to_dense(), Vector(b.begin(), b.end()));
}

// `row col value` lines, one stored entry per line.
inline std::string write_triplets(const SparseMatrix& m) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "# %d %d\n", m.rows(), m.cols());
  out += buf;
  for (const auto& t : m.triplets()) {
    std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", t.row, t.col, t.value);
    out += buf;
  }
  return out;
}

// Vectors use the same layout with column 0.
inline std::string write_triplets(std::span<const double> v) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "# %zu 1\n", v.size());
  out += buf;
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu 0 %.17g\n", i, v[i]);
    out += buf;
  }
  return out;
}

// Reads the triplet format. The `# rows cols` header is optional; without
// it the shape is inferred from the largest indices.
inline SparseMatrix read_triplets(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int rows = -1, cols = -1, line_no = 0;
  int max_r = -1, max_c = -1;
  std::vector<Triplet> entries;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      std::istringstream hs{std::string(t.substr(1))};
      int r = 0, c = 0;
      if (hs >> r >> c) {
        rows = r;
        cols = c;
      }
      continue;
    }
    const auto tok = detail::split_ws(t);
    if (tok.size() != 3) {
      throw ParseError("solver", "triplet line " + std::to_string(line_no) + ": expected 'row col value'",
                       line_no);
    }
    const auto r = detail::to_double(tok[0]);
    const auto c = detail::to_double(tok[1]);
    const auto v = detail::to_double(tok[2]);
    if (!r || !c || !v || *r != std::floor(*r) || *c != std::floor(*c)) {
      throw ParseError("solver", "triplet line " + std::to_string(line_no) + ": bad number", line_no);
    }
    entries.push_back({static_cast<int>(*r), static_cast<int>(*c), *v});
    max_r = std::max(max_r, entries.back().row);
    max_c = std::max(max_c, entries.back().col);
  }
  if (rows < 0) {
    rows = max_r + 1;
    cols = max_c + 1;
  }
  return from_triplets(rows, cols, std::move(entries));
}

}  // namespace crfdepth
