#include "verify/verify.hpp"

#include "lmi/problem.hpp"
#include "support/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace qi::verify {

namespace {

constexpr double kRadiusMargin = 1e-10;

Mat closed_loop_a(const datagen::SigmaSet& sigma, const Mat& a, const Mat& b, const Mat& k) {
  if (sigma.data.kind == datagen::DataKind::autoregressive) {
    const Index p = sigma.data.q();
    const Index m = sigma.data.u.rows();
    return datagen::ar_lifted_closed_loop(a, b, k, p, m, sigma.data.ar_order);
  }
  return a + b * k;
}

}  // namespace

double spectral_radius(const Mat& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double h2_norm_gramian(const Mat& a_cl, const Mat& c_cl) {
  const Index n = a_cl.rows();
  if (spectral_radius(a_cl) >= 1.0) return std::numeric_limits<double>::infinity();
  // vec(W) solves (I - A (x) A) vec(W) = vec(I)
  Mat kron = Mat::Identity(n * n, n * n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n) -= a_cl(i, j) * a_cl;
    }
  }
  Vec rhs = Vec::Zero(n * n);
  for (Index i = 0; i < n; ++i) rhs[i * n + i] = 1.0;
  const Vec wv = kron.partialPivLu().solve(rhs);
  Mat w(n, n);
  for (Index i = 0; i < n; ++i) w.col(i) = wv.segment(i * n, n);
  return std::sqrt(std::max(0.0, (c_cl * w * c_cl.transpose()).trace()));
}

double h2_norm_impulse(const Mat& a_cl, const Mat& c_cl, double tol) {
  if (spectral_radius(a_cl) >= 1.0) return std::numeric_limits<double>::infinity();
  Mat power = Mat::Identity(a_cl.rows(), a_cl.cols());
  double acc = 0.0;
  for (int k = 0; k < 200000; ++k) {
    const double term = (c_cl * power).squaredNorm();
    acc += term;
    if (k > 8 && term <= tol * std::max(acc, 1e-300)) break;
    power = a_cl * power;
  }
  return std::sqrt(acc);
}

bool bounded_real_feasible(const Mat& a_cl, const Mat& c_cl, double gamma) {
  const Index n = a_cl.rows();
  lmi::LmiProblem prob;
  const auto pv = prob.add_symmetric("P", n);
  // -(BRL) > 0: [[P - A'PA - C'C, -A'P], [-PA, gamma^2 I - P]] > 0
  std::vector<std::vector<lmi::MatExpr>> grid(2, std::vector<lmi::MatExpr>(2));
  grid[0][0] = prob.v(pv) - prob.vmul(a_cl.transpose(), pv, a_cl) -
               lmi::LmiProblem::constant(Mat(c_cl.transpose() * c_cl));
  grid[0][1] = -1.0 * prob.vmul(a_cl.transpose(), pv, Mat::Identity(n, n));
  grid[1][1] = lmi::LmiProblem::constant(gamma * gamma * Mat::Identity(n, n)) - prob.v(pv);
  prob.add_psd(std::move(grid), true);
  prob.add_psd(prob.v(pv), true);
  prob.add_nonneg(lmi::LmiProblem::scalar_const(1e10) - prob.trace_expr(pv));
  const auto r = prob.solve_max_margin();
  return r.acceptable() && r.objective > 1e-9;
}

double hinf_norm(const Mat& a_cl, const Mat& c_cl, double rel_tol) {
  if (spectral_radius(a_cl) >= 1.0) return std::numeric_limits<double>::infinity();
  const Index n = a_cl.rows();
  // frequency-grid lower bound for the bracket
  double lo = 0.0;
  const Eigen::MatrixXcd ac = a_cl.cast<std::complex<double>>();
  const Eigen::MatrixXcd cc = c_cl.cast<std::complex<double>>();
  for (int k = 0; k < 64; ++k) {
    const double th = 2.0 * M_PI * k / 64.0;
    const std::complex<double> z(std::cos(th), std::sin(th));
    Eigen::MatrixXcd zi = z * Eigen::MatrixXcd::Identity(n, n) - ac;
    const Eigen::MatrixXcd g = cc * zi.partialPivLu().solve(
                                        Eigen::MatrixXcd::Identity(n, n));
    lo = std::max(lo, g.jacobiSvd().singularValues()[0]);
  }
  double hi = std::max(2.0 * lo, 1e-6);
  int guard = 0;
  while (!bounded_real_feasible(a_cl, c_cl, hi) && guard++ < 60) hi *= 2.0;
  double flo = lo;
  while (hi - flo > rel_tol * hi) {
    const double mid = 0.5 * (hi + flo);
    if (bounded_real_feasible(a_cl, c_cl, mid)) {
      hi = mid;
    } else {
      flo = mid;
    }
  }
  return hi;
}

VerificationReport verify_stabilization(const datagen::SigmaSet& sigma, const Mat& k,
                                        int n_samples, std::uint64_t seed,
                                        const Mat* p_cert) {
  const auto systems = datagen::sample_sigma(sigma, n_samples, seed);
  VerificationReport rep;
  rep.n_samples = static_cast<int>(systems.size());
  rep.worst_margin = std::numeric_limits<double>::infinity();
  for (const auto& [a, b] : systems) {
    SampleDetail d{a, b, 0.0, false};
    const Mat acl = closed_loop_a(sigma, a, b, k);
    d.metric = spectral_radius(acl);
    d.pass = d.metric < 1.0 - kRadiusMargin;
    if (d.pass && p_cert) {
      const Mat lyap = *p_cert - acl * (*p_cert) * acl.transpose();
      d.pass = min_eig(SymMat(lyap, 1e-5)) > 0.0;
    }
    rep.worst_margin = std::min(rep.worst_margin, 1.0 - d.metric);
    if (!d.pass) ++rep.violations;
    rep.detail.push_back(std::move(d));
  }
  return rep;
}

VerificationReport verify_stabilization_set(const qmi::QmiSet& consistent, const Mat& k,
                                            int n_samples, std::uint64_t seed) {
  const auto form = qmi::is_matrix_ellipsoid(consistent, 1e-6);
  if (!form) throw MatError("verify_stabilization_set: consistency set is not an ellipsoid");
  VerificationReport rep;
  rep.n_samples = n_samples;
  rep.worst_margin = std::numeric_limits<double>::infinity();
  const Index n = consistent.q();
  for (int i = 0; i < n_samples; ++i) {
    const Mat z =
        qmi::sample_member(consistent, *form, derive_seed(seed, 17, i), i % 5 == 4);
    const Mat ab = z.transpose();
    SampleDetail d{ab.leftCols(n), ab.rightCols(ab.cols() - n), 0.0, false};
    d.metric = spectral_radius(d.a + d.b * k);
    d.pass = d.metric < 1.0 - kRadiusMargin;
    rep.worst_margin = std::min(rep.worst_margin, 1.0 - d.metric);
    if (!d.pass) ++rep.violations;
    rep.detail.push_back(std::move(d));
  }
  return rep;
}

VerificationReport verify_performance(const datagen::SigmaSet& sigma, const Mat& k,
                                      const Mat& c, const Mat& d, double gamma,
                                      PerfKind kind, int n_samples, std::uint64_t seed) {
  const auto systems = datagen::sample_sigma(sigma, n_samples, seed);
  VerificationReport rep;
  rep.n_samples = static_cast<int>(systems.size());
  rep.worst_margin = std::numeric_limits<double>::infinity();
  const Mat c_cl = c + d * k;
  for (const auto& [a, b] : systems) {
    SampleDetail det{a, b, 0.0, false};
    const Mat acl = a + b * k;
    if (spectral_radius(acl) >= 1.0 - kRadiusMargin) {
      det.metric = std::numeric_limits<double>::infinity();
    } else {
      det.metric =
          kind == PerfKind::h2 ? h2_norm_gramian(acl, c_cl) : hinf_norm(acl, c_cl);
    }
    det.pass = det.metric < gamma;
    rep.worst_margin = std::min(rep.worst_margin, gamma - det.metric);
    if (!det.pass) ++rep.violations;
    rep.detail.push_back(std::move(det));
  }
  return rep;
}

namespace {

double strict_value(const qmi::QmiSet& mset, const Mat& z) {
  return min_eig(mset.evaluate(z)) / tol_scale(mset.n().mat());
}

}  // namespace

bool brute_inclusion(const SymMat& n, const SymMat& m, Index q, int grid, bool* restricted) {
  if (n.dim() != m.dim()) throw MatError("brute_inclusion: dimension mismatch");
  const Index r = n.dim() - q;
  if (q + r > 4) throw MatError("brute_inclusion: desk-scale oracle only (q + r <= 4)");
  const qmi::QmiSet nset(n, q, r);
  const qmi::QmiSet mset(m, q, r);
  if (restricted) *restricted = false;

  const auto form = qmi::is_matrix_ellipsoid(nset, 1e-8);
  std::vector<Mat> points;
  if (form) {
    const Mat rpinv = pinv(form->r_mat).mat();
    const Mat proj = Mat::Identity(r, r) - rpinv * form->r_mat.mat();
    const bool unbounded = proj.norm() > 1e-9;
    if (unbounded && restricted) *restricted = true;
    const double box = 10.0;
    // dense ball grid in the W parameter (q = 1 in all supported uses gives a
    // Euclidean ball in R^r; general small q uses the same entry grid with an
    // operator-norm filter)
    const Index dims = r * q;
    std::vector<Mat> wlist;
    if (dims == 1) {
      for (int i = 0; i <= grid; ++i) {
        wlist.push_back(Mat::Constant(1, 1, -1.0 + 2.0 * i / grid));
      }
    } else {
      const int per = std::max(3, static_cast<int>(std::lround(
                                      std::pow(static_cast<double>(grid),
                                               1.0 / static_cast<double>(dims)))));
      std::vector<int> idx(dims, 0);
      while (true) {
        Mat w(r, q);
        for (Index d2 = 0; d2 < dims; ++d2) {
          w(d2 % r, d2 / r) = -1.0 + 2.0 * idx[d2] / (per - 1.0);
        }
        const double on = op_norm(w);
        if (on <= 1.0) {
          wlist.push_back(w);
        } else {
          wlist.push_back(w / on);  // project onto the boundary
        }
        Index d2 = 0;
        while (d2 < dims && ++idx[d2] == per) idx[d2++] = 0;
        if (d2 == dims) break;
      }
    }
    Rng rng(12345);
    for (const Mat& w : wlist) {
      Mat z = form->center + rpinv * w * form->q_mat.mat();
      points.push_back(z);
      if (unbounded) {
        for (int kk = 0; kk < 3; ++kk) {
          Mat kmat(r, q);
          for (Index i = 0; i < r; ++i) {
            for (Index j = 0; j < q; ++j) kmat(i, j) = rng.uniform(-box, box);
          }
          points.push_back(z + proj * kmat);
        }
      }
    }
  } else {
    // no ellipsoid description: box-restricted raw scan over Z
    if (restricted) *restricted = true;
    const double box = 10.0;
    const Index dims = r * q;
    const int per = std::max(5, static_cast<int>(std::lround(
                                    std::pow(static_cast<double>(grid),
                                             1.0 / static_cast<double>(dims)))));
    std::vector<int> idx(dims, 0);
    while (true) {
      Mat z(r, q);
      for (Index d2 = 0; d2 < dims; ++d2) {
        z(d2 % r, d2 / r) = -box + 2.0 * box * idx[d2] / (per - 1.0);
      }
      if (qmi::contains(nset, z)) points.push_back(z);
      Index d2 = 0;
      while (d2 < dims && ++idx[d2] == per) idx[d2++] = 0;
      if (d2 == dims) break;
    }
  }

  // find the worst point; refine locally by coordinate descent
  double worst = std::numeric_limits<double>::infinity();
  Mat zworst;
  for (const Mat& z : points) {
    const double v = strict_value(mset, z);
    if (v < worst) {
      worst = v;
      zworst = z;
    }
  }
  if (points.empty()) return true;  // empty set is included in anything
  double step = 0.05 * (1.0 + zworst.norm());
  for (int it = 0; it < 200 && step > 1e-12; ++it) {
    bool improved = false;
    for (Index i = 0; i < zworst.rows(); ++i) {
      for (Index j = 0; j < zworst.cols(); ++j) {
        for (double sgn : {-1.0, 1.0}) {
          Mat z2 = zworst;
          z2(i, j) += sgn * step;
          if (!qmi::contains(nset, z2, false, 1e-12)) continue;
          const double v = strict_value(mset, z2);
          if (v < worst) {
            worst = v;
            zworst = z2;
            improved = true;
          }
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return worst > 1e-9;
}

}  // namespace qi::verify
