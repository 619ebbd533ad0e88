#pragma once

#include "matkit/matkit.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace qi::qmi {

// Solution set Z_{q,r}(N) of the QMI [I_q; Z]^T N [I_q; Z] >= 0 over Z in R^{r x q}.
// Partition: N11 (q x q), N12 (q x r), N22 (r x r).
class QmiSet {
 public:
  QmiSet(SymMat n, Index q, Index r);

  const SymMat& n() const { return n_; }
  Index q() const { return q_; }
  Index r() const { return r_; }

  Mat n11() const { return n_.sub(0, 0, q_, q_); }
  Mat n12() const { return n_.sub(0, q_, q_, r_); }
  Mat n21() const { return n_.sub(q_, 0, r_, q_); }
  SymMat n22() const { return n_.block(q_, q_, r_, r_); }

  // [I; Z]^T N [I; Z] for Z in R^{r x q}.
  SymMat evaluate(const Mat& z) const;

 private:
  SymMat n_;
  Index q_ = 0;
  Index r_ = 0;
};

// Matrix-ellipsoid data of Eq-(5) shape: value(Z) = Q^2 - (Z - Zc)^T R^2 (Z - Zc),
// with Q = (N|N22)^(1/2), R = (-N22)^(1/2), Zc = -N22^+ N21.
struct EllipsoidForm {
  SymMat q_mat;
  SymMat r_mat;
  Mat center;  // r x q
};

struct SlemCertificate {
  double alpha = 0.0;  // >= 0
  double beta = 0.0;   // > 0
};

inline constexpr double kQmiTol = 1e-8;

// Membership of Z in Z_{q,r}(N) (strict: Z^+). The defining matrix is normalized
// by max(1, ||N||_F) before the eigenvalue test.
bool contains(const QmiSet& set, const Mat& z, bool strict = false, double tol = kQmiTol);

// Checks N22 <= 0, ker N22 (subset) ker N12, N|N22 >= 0; returns the ellipsoid
// data on success.
std::optional<EllipsoidForm> is_matrix_ellipsoid(const QmiSet& set, double tol = kQmiTol);

// Explicit parametrization of the solution set, transposed convention: returns
// D = -N12 N22^+ + (N|N22)^(1/2) M1 ((-N22)^+)^(1/2) + M2 (I - N22 N22^+),
// a q x r matrix with D^T in Z_{q,r}(N). Requires M1 M1^T <= I and a matrix
// ellipsoid.
Mat explicit_param(const QmiSet& set, const Mat& m1, const Mat& m2, double tol = kQmiTol);

// M - alpha N >= [beta I_q 0; 0 0] within -tol * scale on the spectrum.
bool slem_certificate_check(const SymMat& m, const SymMat& n, const SlemCertificate& cert,
                            Index q, double tol = 1e-7);

enum class SlemOutcome { found, infeasible };

struct SlemSearchResult {
  SlemOutcome outcome = SlemOutcome::infeasible;
  SlemCertificate cert;
};

// Maximizes beta over alpha >= 0 subject to M - alpha N >= [beta I_q 0; 0 0].
// For fixed alpha the largest beta is the minimum eigenvalue of the generalized
// Schur complement of S = M - alpha N (when S22 >= 0 and ker S22 (subset) ker S12),
// and beta*(alpha) is concave, so the two-variable SDP reduces to a 1-D concave
// maximization. Returns a certificate iff the optimum has beta > beta_min.
// Solver failures surface as MatError, distinct from a clean "infeasible".
SlemSearchResult find_slem_certificate(const SymMat& m, const SymMat& n, Index q,
                                       double beta_min = 1e-9);

// Image set Pi_W = [W^T 0; 0 I] Pi [W 0; 0 I] of Z(Pi) under Z -> Z W.
// `exact` is true when W has full column rank or Pi22 is nonsingular.
struct ImageResult {
  QmiSet set;
  bool exact = false;
};
ImageResult image_transform(const QmiSet& set, const Mat& w, double rank_tol = kRankTol);

// M - sum_j alpha_j N_j >= -tol * scale; sufficient for the intersection of the
// Z(N_j) to be contained in Z(M).
bool multi_slem_check(const SymMat& m, const std::vector<SymMat>& ns,
                      const std::vector<double>& alphas, double tol = 1e-7);

// Random member of a matrix ellipsoid: center + R^+ W Q + kernel drift, with W
// drawn in the operator-norm unit ball by singular-value rescaling. Kernel
// directions (unbounded part) are scaled by kernel_box (0 disables them).
// on_boundary forces ||W||_2 = 1.
Mat sample_member(const QmiSet& set, const EllipsoidForm& form, std::uint64_t seed,
                  bool on_boundary = false, double kernel_box = 0.0);

// W in the operator-norm unit ball of rows x cols matrices (boundary: norm 1).
Mat sample_op_ball(Index rows, Index cols, std::uint64_t seed, bool on_boundary = false);

}  // namespace qi::qmi
