#include "qmi/qmi.hpp"

#include "support/rng.hpp"

#include <algorithm>
#include <cmath>

namespace qi::qmi {

QmiSet::QmiSet(SymMat n, Index q, Index r) : n_(std::move(n)), q_(q), r_(r) {
  if (q < 0 || r < 0 || n_.dim() != q + r) {
    throw MatError("QmiSet: dim(N) must equal q + r");
  }
}

SymMat QmiSet::evaluate(const Mat& z) const {
  if (z.rows() != r_ || z.cols() != q_) throw MatError("QmiSet: Z must be r x q");
  Mat iz(q_ + r_, q_);
  iz.topRows(q_) = Mat::Identity(q_, q_);
  iz.bottomRows(r_) = z;
  return SymMat(iz.transpose() * n_.mat() * iz, 1e-6);
}

bool contains(const QmiSet& set, const Mat& z, bool strict, double tol) {
  const double s = tol_scale(set.n().mat());
  const SymMat value(set.evaluate(z).mat() / s, 1e-6);
  const double lo = min_eig(value);
  return strict ? lo >= tol : lo >= -tol;
}

std::optional<EllipsoidForm> is_matrix_ellipsoid(const QmiSet& set, double tol) {
  const SymMat n22 = set.n22();
  if (!is_nsd(n22, tol)) return std::nullopt;
  if (!kernel_contains(n22, set.n12(), tol)) return std::nullopt;
  const SymMat sc = schur_complement(set.n(), set.q());
  if (!is_psd(sc, tol)) return std::nullopt;
  const double clip = tol * tol_scale(set.n().mat()) + kPsdTol;
  EllipsoidForm form;
  form.q_mat = psd_sqrt(sc, clip);
  form.r_mat = psd_sqrt(SymMat(-n22.mat()), clip);
  form.center = -pinv(n22).mat() * set.n21();
  return form;
}

Mat explicit_param(const QmiSet& set, const Mat& m1, const Mat& m2, double tol) {
  const auto form = is_matrix_ellipsoid(set, tol);
  if (!form) throw MatError("explicit_param: set is not a matrix ellipsoid");
  if (m1.rows() != set.q() || m1.cols() != set.r() || m2.rows() != set.q() ||
      m2.cols() != set.r()) {
    throw MatError("explicit_param: M1, M2 must be q x r");
  }
  if (op_norm(m1) > 1.0 + tol) throw MatError("explicit_param: ||M1||_2 exceeds 1");
  const SymMat n22 = set.n22();
  const Mat pinv22 = pinv(n22).mat();
  const Mat center = -set.n12() * pinv22;
  const Mat rinv = psd_pinv_sqrt(SymMat(-n22.mat()), tol * tol_scale(set.n().mat()) + kPsdTol).mat();
  const Mat proj = Mat::Identity(set.r(), set.r()) - n22.mat() * pinv22;
  return center + form->q_mat.mat() * m1 * rinv + m2 * proj;
}

bool slem_certificate_check(const SymMat& m, const SymMat& n, const SlemCertificate& cert,
                            Index q, double tol) {
  if (m.dim() != n.dim()) throw MatError("slem_certificate_check: dimension mismatch");
  Mat res = m.mat() - cert.alpha * n.mat();
  res.topLeftCorner(q, q) -= cert.beta * Mat::Identity(q, q);
  const double scale = std::max(1.0, std::max(m.mat().norm(), std::abs(cert.alpha) * n.mat().norm()));
  return min_eig(SymMat(res, 1e-6)) >= -tol * scale;
}

namespace {

constexpr double kInfeasible = -std::numeric_limits<double>::infinity();

// Largest beta with M - alpha N >= diag(beta I_q, 0), or -inf when no beta exists.
double beta_of_alpha(const SymMat& m, const SymMat& n, Index q, double alpha) {
  const SymMat s(m.mat() - alpha * n.mat(), 1e-6);
  const Index r = s.dim() - q;
  const SymMat s22 = s.block(q, q, r, r);
  const double scale = tol_scale(s.mat());
  if (r > 0) {
    if (min_eig(s22) < -1e-9 * scale) return kInfeasible;
    const Mat proj = Mat::Identity(r, r) - s22.mat() * pinv(s22).mat();
    if ((s.sub(0, q, q, r) * proj).norm() > 1e-8 * scale) return kInfeasible;
  }
  return min_eig(schur_complement(s, q));
}

}  // namespace

SlemSearchResult find_slem_certificate(const SymMat& m, const SymMat& n, Index q,
                                       double beta_min) {
  if (m.dim() != n.dim()) throw MatError("find_slem_certificate: dimension mismatch");
  const auto f = [&](double a) { return beta_of_alpha(m, n, q, a); };

  // The feasible alphas form an interval; scan a geometric grid for a foothold.
  double best_a = 0.0;
  double best_f = f(0.0);
  std::vector<double> grid = {0.0};
  for (double a = 1e-8; a <= 1e12; a *= 4.0) grid.push_back(a);
  for (double a : grid) {
    const double v = f(a);
    if (v > best_f) {
      best_f = v;
      best_a = a;
    }
  }
  if (best_f == kInfeasible) return {SlemOutcome::infeasible, {}};

  // Bracket around the best grid point, then golden-section the concave profile.
  double lo = 0.0, hi = best_a * 4.0 + 1e-6;
  for (double a : grid) {
    if (a < best_a && f(a) == kInfeasible) lo = std::max(lo, a);
    if (a > best_a && f(a) == kInfeasible) hi = std::min(hi, a);
  }
  const double gr = 0.6180339887498949;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + hi); ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = f(x1);
    }
  }
  double a_star = (f1 > f2) ? x1 : x2;
  double b_star = std::max(f1, f2);
  if (best_f > b_star) {
    a_star = best_a;
    b_star = best_f;
  }
  if (!(b_star > beta_min)) return {SlemOutcome::infeasible, {}};
  return {SlemOutcome::found, {a_star, b_star}};
}

ImageResult image_transform(const QmiSet& set, const Mat& w, double rank_tol) {
  if (w.rows() != set.q()) throw MatError("image_transform: W must have q rows");
  const Index p = w.cols(), r = set.r();
  Mat t = Mat::Zero(set.q() + r, p + r);
  t.topLeftCorner(set.q(), p) = w;
  t.bottomRightCorner(r, r) = Mat::Identity(r, r);
  const SymMat nw(t.transpose() * set.n().mat() * t, 1e-6);
  bool exact = false;
  if (w.size() > 0) {
    const auto svd = w.jacobiSvd();
    const Vec sv = svd.singularValues();
    exact = sv.size() == p && sv[sv.size() - 1] > rank_tol * std::max(1.0, sv[0]);
  } else {
    exact = (p == 0);
  }
  if (!exact) exact = numerical_rank(set.n22(), rank_tol) == r;
  return {QmiSet(nw, p, r), exact};
}

bool multi_slem_check(const SymMat& m, const std::vector<SymMat>& ns,
                      const std::vector<double>& alphas, double tol) {
  if (ns.size() != alphas.size()) throw MatError("multi_slem_check: size mismatch");
  Mat res = m.mat();
  double scale = m.mat().norm();
  for (std::size_t j = 0; j < ns.size(); ++j) {
    if (alphas[j] < 0) throw MatError("multi_slem_check: negative multiplier");
    res -= alphas[j] * ns[j].mat();
    scale = std::max(scale, alphas[j] * ns[j].mat().norm());
  }
  return min_eig(SymMat(res, 1e-6)) >= -tol * std::max(1.0, scale);
}

Mat sample_op_ball(Index rows, Index cols, std::uint64_t seed, bool on_boundary) {
  if (rows == 0 || cols == 0) return Mat::Zero(rows, cols);
  Rng rng(seed);
  Mat g(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) g(i, j) = rng.gauss();
  }
  const double smax = op_norm(g);
  if (smax == 0.0) return g;
  const double target =
      on_boundary ? 1.0 : std::pow(rng.u01(), 1.0 / static_cast<double>(rows * cols));
  return g * (target / smax);
}

Mat sample_member(const QmiSet& set, const EllipsoidForm& form, std::uint64_t seed,
                  bool on_boundary, double kernel_box) {
  const Index q = set.q(), r = set.r();
  const Mat w = sample_op_ball(r, q, seed, on_boundary);
  const Mat rpinv = pinv(SymMat(form.r_mat.mat() * 1.0, 1e-6)).mat();
  Mat z = form.center + rpinv * w * form.q_mat.mat();
  if (kernel_box > 0.0) {
    Rng rng(derive_seed(seed, 0x6b65726eULL));
    const Mat proj = Mat::Identity(r, r) - rpinv * form.r_mat.mat();
    Mat k(r, q);
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < q; ++j) k(i, j) = rng.uniform(-kernel_box, kernel_box);
    }
    z += proj * k;
  }
  return z;
}

}  // namespace qi::qmi
