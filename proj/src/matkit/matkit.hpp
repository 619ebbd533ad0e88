#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace qi {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// Thrown on contract violations (bad dimensions, non-finite input, ...).
class MatError : public std::runtime_error {
 public:
  explicit MatError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr double kSymTol = 1e-9;   // relative symmetry slack on construction
inline constexpr double kRankTol = 1e-9;  // relative eigenvalue cutoff for numerical rank
inline constexpr double kPsdTol = 1e-9;   // relative negative-eigenvalue clipping window

bool all_finite(const Mat& a);

// Scale used for relative tolerances: max(1, ||A||_F).
double tol_scale(const Mat& a);

// Symmetric matrix. Construction checks max |a_ij - a_ji| <= sym_tol * max(1, ||A||_F)
// and stores the symmetrized part.
class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(Mat a, double sym_tol = kSymTol);

  static SymMat Zero(Index dim) { return SymMat(Mat::Zero(dim, dim)); }
  static SymMat Identity(Index dim) { return SymMat(Mat::Identity(dim, dim)); }
  // Diagonal matrix from a vector.
  static SymMat Diag(const Vec& d);

  Index dim() const { return a_.rows(); }
  const Mat& mat() const { return a_; }
  double operator()(Index i, Index j) const { return a_(i, j); }

  SymMat block(Index i, Index j, Index rows, Index cols) const;  // must be a symmetric block
  Mat sub(Index i, Index j, Index rows, Index cols) const { return a_.block(i, j, rows, cols); }

 private:
  Mat a_;
};

// Eigendecomposition of a symmetric matrix: A = V diag(values) V^T,
// values ascending, V orthonormal.
struct EigDecomp {
  Vec values;
  Mat vectors;
};

EigDecomp eig_sym(const SymMat& a);

double min_eig(const SymMat& a);
double max_abs_eig(const SymMat& a);

// Moore-Penrose pseudo-inverse via eigendecomposition. Eigenvalues with
// |lambda| <= rank_tol * max|lambda| are treated as zero.
SymMat pinv(const SymMat& a, double rank_tol = kRankTol);

// Numerical rank with the same cutoff as pinv.
Index numerical_rank(const SymMat& a, double rank_tol = kRankTol);

// Positive semidefinite square root. Eigenvalues in [-psd_tol*scale, 0) are
// clipped to zero; anything below that is an error.
SymMat psd_sqrt(const SymMat& a, double psd_tol = kPsdTol);

// ((A^+)^(1/2)) for A >= 0; the pinv-root used by the explicit QMI parametrization.
SymMat psd_pinv_sqrt(const SymMat& a, double psd_tol = kPsdTol, double rank_tol = kRankTol);

// Generalized Schur complement M|D = A - B D^+ C of the 2x2 partition at `split`
// (A is split x split).
SymMat schur_complement(const SymMat& m, Index split, double rank_tol = kRankTol);

// Orthonormal columns spanning im A; column count equals the numerical rank.
Mat range_basis(const SymMat& a, double rank_tol = kRankTol);

// True iff ker A (subset) ker B, tested as ||B (I - A^+ A)||_F <= tol * max(1, ||B||_F).
bool kernel_contains(const SymMat& a, const Mat& b, double tol = 1e-8);

// A >= -tol * max(1, ||A||_F) on the spectrum.
bool is_psd(const SymMat& a, double tol = 1e-8);
// A <= +tol * max(1, ||A||_F) on the spectrum.
bool is_nsd(const SymMat& a, double tol = 1e-8);

// Largest singular value.
double op_norm(const Mat& a);

}  // namespace qi
