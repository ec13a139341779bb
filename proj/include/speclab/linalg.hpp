#pragma once

// Dense linear-algebra kernel: SVD, orthonormal bases, principal angles
// between singular subspaces, and the singular-value inequalities used by
// the rest of the library (Poincare separation, additive/multiplicative
// bounds, principal-angle-weighted product lower bounds).

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace speclab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Central tolerance configuration.
namespace tol {
inline constexpr double rank_cut = 1e-12;        // sigma below rank_cut*sigma1 counts as zero
inline constexpr double bound_slack = 1e-9;      // relative slack for inequality checks
inline constexpr double svd_reconstruction = 1e-10;
}  // namespace tol

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

struct SvdFactorization {
  Matrix left;    // orthonormal columns, rows x q
  Vector sigmas;  // descending, q = min(rows, cols)
  Matrix right;   // orthonormal columns, cols x q

  /// sigma_i with the paper's convention sigma_i = 0 for i beyond min dims.
  /// `i` is 1-based.
  double sigma(int i) const {
    if (i < 1) throw std::invalid_argument("sigma index must be >= 1");
    return i <= sigmas.size() ? sigmas[i - 1] : 0.0;
  }

  int numerical_rank() const {
    if (sigmas.size() == 0 || sigmas[0] <= 0.0) return 0;
    const double cut = tol::rank_cut * sigmas[0];
    int r = 0;
    while (r < sigmas.size() && sigmas[r] > cut) ++r;
    return r;
  }

  Matrix reconstruct() const { return left * sigmas.asDiagonal() * right.transpose(); }
};

inline SvdFactorization svd(const Matrix& m) {
  require(m.rows() >= 1 && m.cols() >= 1, "svd: empty matrix");
  require(all_finite(m), "svd: non-finite entry");
  SvdFactorization f;
  if (std::max(m.rows(), m.cols()) >= 32) {
    Eigen::BDCSVD<Matrix> s(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    f.left = s.matrixU();
    f.sigmas = s.singularValues();
    f.right = s.matrixV();
  } else {
    Eigen::JacobiSVD<Matrix> s(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    f.left = s.matrixU();
    f.sigmas = s.singularValues();
    f.right = s.matrixV();
  }
  return f;
}

inline Vector singular_values(const Matrix& m) { return svd(m).sigmas; }

/// sigma_i(m), 1-based, zero beyond min dims.
inline double sigma_value(const Matrix& m, int i) { return svd(m).sigma(i); }

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return svd(m).sigma(1);
}

inline int numerical_rank(const Matrix& m) { return svd(m).numerical_rank(); }

struct PrincipalAngleReport {
  int r = 0;               // subspace rank taken from the first argument
  int k = 0;               // subspace rank taken from the second argument
  double cos_value = 0.0;  // smallest singular value of the basis overlap
};

/// cos theta(A_r, B_k) = sigma_min(V_{A_r}^T U_{B_k}); the cosine of the
/// largest principal angle between the top-r right singular subspace of A
/// and the top-k left singular subspace of B. Requesting a rank beyond the
/// numerical rank of either argument yields 0 (the sigma == 0 convention).
inline PrincipalAngleReport principal_angle_cos(const SvdFactorization& fa, int r,
                                                const SvdFactorization& fb, int k) {
  require(r >= 1 && k >= 1, "principal_angle_cos: ranks must be >= 1");
  PrincipalAngleReport rep;
  rep.r = r;
  rep.k = k;
  if (r > fa.numerical_rank() || k > fb.numerical_rank()) {
    rep.cos_value = 0.0;
    return rep;
  }
  const Matrix overlap = fa.right.leftCols(r).transpose() * fb.left.leftCols(k);
  const Vector s = singular_values(overlap);
  double c = s[s.size() - 1];
  rep.cos_value = std::clamp(c, 0.0, 1.0);
  return rep;
}

inline PrincipalAngleReport principal_angle_cos(const Matrix& a, int r, const Matrix& b, int k) {
  return principal_angle_cos(svd(a), r, svd(b), k);
}

struct BoundReport {
  double lower_bound = 0.0;
  double subject_value = 0.0;
  double slack_ratio = 0.0;  // subject / lower, +inf when lower == 0
  int arg_r1 = 0;
  int arg_r2 = 0;

  bool holds(double rel_slack = tol::bound_slack) const {
    return subject_value >= lower_bound - rel_slack * std::max(1.0, subject_value);
  }
};

inline double ratio_or_inf(double subject, double lower) {
  if (lower == 0.0) return std::numeric_limits<double>::infinity();
  return subject / lower;
}

/// sigma_k(AB) >= cos theta(A_r, B_k) * sigma_r(A) * sigma_k(B), r >= k >= 1.
inline BoundReport product_lower_bound(const Matrix& a, const Matrix& b, int k, int r) {
  require(a.cols() == b.rows(), "product_lower_bound: dimension mismatch");
  require(k >= 1 && r >= k, "product_lower_bound: need r >= k >= 1");
  const SvdFactorization fa = svd(a), fb = svd(b);
  const double cosab = principal_angle_cos(fa, r, fb, k).cos_value;
  BoundReport rep;
  rep.lower_bound = cosab * fa.sigma(r) * fb.sigma(k);
  rep.subject_value = sigma_value(a * b, k);
  rep.slack_ratio = ratio_or_inf(rep.subject_value, rep.lower_bound);
  rep.arg_r1 = r;
  rep.arg_r2 = k;
  return rep;
}

enum class TripleVariant { IsolateLeft, IsolateMiddle, IsolateRight };

/// Lower bounds on sigma_k(ABC) built from two applications of the
/// principal-angle bound. The variant names which factor carries the k-th
/// singular value. Index constraints: isolate-middle needs r1 >= k and
/// r2 >= k; isolate-left and isolate-right need r2 >= r1 >= k.
inline BoundReport triple_product_lower_bound(const Matrix& a, const Matrix& b, const Matrix& c,
                                              int k, int r1, int r2, TripleVariant variant) {
  require(a.cols() == b.rows() && b.cols() == c.rows(),
          "triple_product_lower_bound: dimension mismatch");
  require(k >= 1 && r1 >= 1 && r2 >= 1, "triple_product_lower_bound: indices must be >= 1");

  const SvdFactorization fa = svd(a), fb = svd(b), fc = svd(c);
  double lower = 0.0;
  switch (variant) {
    case TripleVariant::IsolateMiddle: {
      require(r1 >= k && r2 >= k, "isolate-middle: need r1 >= k and r2 >= k");
      const SvdFactorization fbc = svd(b * c);
      const double cos1 = principal_angle_cos(fa, r1, fbc, k).cos_value;
      const double cos2 = principal_angle_cos(fb, k, fc, r2).cos_value;
      lower = fa.sigma(r1) * fb.sigma(k) * fc.sigma(r2) * cos1 * cos2;
      break;
    }
    case TripleVariant::IsolateRight: {
      require(r2 >= r1 && r1 >= k, "isolate-right: need r2 >= r1 >= k");
      const SvdFactorization fab = svd(a * b);
      const double cos1 = principal_angle_cos(fab, r1, fc, k).cos_value;
      const double cos2 = principal_angle_cos(fa, r2, fb, r1).cos_value;
      lower = fa.sigma(r2) * fb.sigma(r1) * fc.sigma(k) * cos1 * cos2;
      break;
    }
    case TripleVariant::IsolateLeft: {
      require(r2 >= r1 && r1 >= k, "isolate-left: need r2 >= r1 >= k");
      const SvdFactorization fbc = svd(b * c);
      const double cos1 = principal_angle_cos(fa, k, fbc, r1).cos_value;
      const double cos2 = principal_angle_cos(fb, r2, fc, r1).cos_value;
      lower = fa.sigma(k) * fb.sigma(r2) * fc.sigma(r1) * cos1 * cos2;
      break;
    }
  }
  BoundReport rep;
  rep.lower_bound = lower;
  rep.subject_value = sigma_value(a * b * c, k);
  rep.slack_ratio = ratio_or_inf(rep.subject_value, rep.lower_bound);
  rep.arg_r1 = r1;
  rep.arg_r2 = r2;
  return rep;
}

/// Supremum tightening: exhaustive search of the isolate-middle bound with
/// k = 1 over r1 in [1, rank(A)] and r2 in [1, rank(C)]. Returns the
/// maximizing (r1, r2) and the value.
inline BoundReport sup_lower_bound(const Matrix& a, const Matrix& b, const Matrix& c) {
  require(a.cols() == b.rows() && b.cols() == c.rows(), "sup_lower_bound: dimension mismatch");
  const SvdFactorization fa = svd(a), fb = svd(b), fc = svd(c);
  const SvdFactorization fbc = svd(b * c);
  const int ra = std::max(1, fa.numerical_rank());
  const int rc = std::max(1, fc.numerical_rank());

  BoundReport rep;
  rep.subject_value = sigma_value(a * b * c, 1);
  rep.arg_r1 = 1;
  rep.arg_r2 = 1;
  for (int r1 = 1; r1 <= ra; ++r1) {
    const double cos1 = principal_angle_cos(fa, r1, fbc, 1).cos_value;
    const double s1 = fa.sigma(r1);
    if (s1 == 0.0) break;
    for (int r2 = 1; r2 <= rc; ++r2) {
      const double cos2 = principal_angle_cos(fb, 1, fc, r2).cos_value;
      const double value = s1 * fb.sigma(1) * fc.sigma(r2) * cos1 * cos2;
      if (value > rep.lower_bound) {
        rep.lower_bound = value;
        rep.arg_r1 = r1;
        rep.arg_r2 = r2;
      }
    }
  }
  rep.slack_ratio = ratio_or_inf(rep.subject_value, rep.lower_bound);
  return rep;
}

inline Matrix delete_rows_cols(const Matrix& a, const std::vector<int>& rows,
                               const std::vector<int>& cols) {
  std::vector<bool> drop_row(a.rows(), false), drop_col(a.cols(), false);
  for (int r : rows) {
    require(r >= 0 && r < a.rows(), "delete_rows_cols: row index out of range");
    drop_row[r] = true;
  }
  for (int c : cols) {
    require(c >= 0 && c < a.cols(), "delete_rows_cols: col index out of range");
    drop_col[c] = true;
  }
  std::vector<int> keep_rows, keep_cols;
  for (int i = 0; i < a.rows(); ++i)
    if (!drop_row[i]) keep_rows.push_back(i);
  for (int j = 0; j < a.cols(); ++j)
    if (!drop_col[j]) keep_cols.push_back(j);
  require(!keep_rows.empty() && !keep_cols.empty(), "delete_rows_cols: empty submatrix");
  Matrix sub(keep_rows.size(), keep_cols.size());
  for (size_t i = 0; i < keep_rows.size(); ++i)
    for (size_t j = 0; j < keep_cols.size(); ++j) sub(i, j) = a(keep_rows[i], keep_cols[j]);
  return sub;
}

struct InterlacingEntry {
  int i = 0;           // 1-based singular value index
  double upper = 0.0;  // sigma_i(A)
  double mid = 0.0;    // sigma_i(A_sub)
  double lower = 0.0;  // sigma_{i+r}(A)
  bool ok = false;
};

struct InterlacingReport {
  std::vector<InterlacingEntry> entries;
  bool all_ok = true;
};

/// Poincare separation for singular values: after deleting a total of r
/// rows/columns, sigma_i(A) >= sigma_i(A_sub) >= sigma_{i+r}(A).
inline InterlacingReport interlacing_check(const Matrix& a, const std::vector<int>& deleted_rows,
                                           const std::vector<int>& deleted_cols) {
  const Matrix sub = delete_rows_cols(a, deleted_rows, deleted_cols);
  const int r = static_cast<int>(deleted_rows.size() + deleted_cols.size());
  const SvdFactorization fa = svd(a), fs = svd(sub);
  const double slack = tol::bound_slack * std::max(1.0, fa.sigma(1));

  InterlacingReport rep;
  const int imax = static_cast<int>(std::min(a.rows(), a.cols()));
  for (int i = 1; i <= imax; ++i) {
    InterlacingEntry e;
    e.i = i;
    e.upper = fa.sigma(i);
    e.mid = fs.sigma(i);
    e.lower = fa.sigma(i + r);
    e.ok = (e.upper >= e.mid - slack) && (e.mid >= e.lower - slack);
    rep.all_ok = rep.all_ok && e.ok;
    rep.entries.push_back(e);
  }
  return rep;
}

struct TwoSidedBound {
  double low = 0.0;
  double high = 0.0;
  double actual = 0.0;

  bool holds(double scale = 1.0) const {
    const double slack = tol::bound_slack * std::max(1.0, scale);
    return actual >= low - slack && actual <= high + slack;
  }
};

/// sigma_i(A) - sigma_1(B) <= sigma_i(A+B) <= sigma_i(A) + sigma_1(B).
inline TwoSidedBound additive_sv_bounds(const Matrix& a, const Matrix& b, int i) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "additive_sv_bounds: shape mismatch");
  require(i >= 1, "additive_sv_bounds: index must be >= 1");
  const double sa = sigma_value(a, i), sb1 = sigma_value(b, 1);
  TwoSidedBound r;
  r.low = sa - sb1;
  r.high = sa + sb1;
  r.actual = sigma_value(a + b, i);
  return r;
}

/// sigma_i(A) sigma_q(B) <= sigma_i(AB) <= sigma_i(A) sigma_1(B) with q the
/// inner dimension (sigma_q(B) = 0 when B has fewer columns than rows). The
/// smallest-singular-value index is the inner dimension rather than
/// min(rows(A), cols(B)); the latter form fails for rectangular factors
/// whose product annihilates directions.
inline TwoSidedBound multiplicative_sv_bounds(const Matrix& a, const Matrix& b, int i) {
  require(a.cols() == b.rows(), "multiplicative_sv_bounds: dimension mismatch");
  require(i >= 1, "multiplicative_sv_bounds: index must be >= 1");
  const SvdFactorization fb = svd(b);
  const double sa = sigma_value(a, i);
  const int q = static_cast<int>(a.cols());
  TwoSidedBound r;
  r.low = sa * fb.sigma(q);
  r.high = sa * fb.sigma(1);
  r.actual = sigma_value(a * b, i);
  return r;
}

}  // namespace speclab
