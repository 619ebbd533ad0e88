#include "lmi/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace qi::lmi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DenseState {
  Mat x, z;
  Eigen::LLT<Mat> lltx, lltz;
  Mat g;     // NT scaling, G X G = Z
  Mat xinv;
  Mat gp;    // G * pool
  Mat gram;  // pool^T G pool
  Mat rd;    // dual residual
  Mat ez;    // pool^T Z pool
};

struct DiagState {
  Vec x, z, g2, rd;
};

// Largest step a with S + a*dS > 0, via eigenvalues of L^-1 dS L^-T.
double max_step(const Eigen::LLT<Mat>& llt, const Mat& ds) {
  const Mat l = llt.matrixL();
  Mat m = l.triangularView<Eigen::Lower>().solve(ds);
  m = l.triangularView<Eigen::Lower>().solve(m.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()),
                                        Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  return lo >= -1e-14 ? kInf : 1.0 / (-lo);
}

double max_step_diag(const Vec& x, const Vec& dx) {
  double a = kInf;
  for (Index i = 0; i < x.size(); ++i) {
    if (dx[i] < 0) a = std::min(a, -x[i] / dx[i]);
  }
  return a;
}

Mat assemble_var_comb(const DenseBlock& blk, const Vec& w) {
  // sum_i w_i F_i = pool * M * pool^T with M gathered from factor terms
  Mat m = Mat::Zero(blk.pool.cols(), blk.pool.cols());
  for (const auto& t : blk.terms) {
    const double c = 0.5 * t.c * w[t.var];
    m(t.pu, t.pv) += c;
    m(t.pv, t.pu) += c;
  }
  return blk.pool * m * blk.pool.transpose();
}

}  // namespace

SdpSolution solve_sdp(const SdpProblem& prob, const SolverOptions& opt_in) {
  const int m = prob.num_vars;
  SolverOptions opt = opt_in;
  if (const char* env = std::getenv("QI_SDP_VERBOSE"); env && env[0] == '1') {
    opt.verbose = true;
  }
  SdpSolution out;
  out.y = Vec::Zero(m);
  if (m == 0) {
    out.status = SolveStatus::optimal;
    return out;
  }

  // Work on a scaled copy: unit-ish block constants and unit-ish columns of F.
  SdpProblem p = prob;
  Vec dvar = Vec::Ones(m);
  for (auto& blk : p.dense) {
    const double s = std::max(1.0, blk.c0.norm());
    blk.c0 /= s;
    for (auto& t : blk.terms) t.c /= s;
  }
  for (auto& blk : p.diag) {
    // rows of a diagonal block are independent scalar constraints
    Vec s = Vec::Ones(blk.n);
    for (Index i = 0; i < blk.n; ++i) s[i] = std::max(1.0, std::abs(blk.c0[i]));
    for (const auto& e : blk.entries) {
      s[e.index] = std::max(s[e.index], std::abs(e.c));
    }
    for (Index i = 0; i < blk.n; ++i) blk.c0[i] /= s[i];
    for (auto& e : blk.entries) e.c /= s[e.index];
  }
  {
    Vec mag = Vec::Zero(m);
    for (const auto& blk : p.dense) {
      for (const auto& t : blk.terms) {
        mag[t.var] = std::max(mag[t.var], std::abs(t.c) * blk.pool.col(t.pu).norm() *
                                              blk.pool.col(t.pv).norm());
      }
    }
    for (const auto& blk : p.diag) {
      for (const auto& e : blk.entries) mag[e.var] = std::max(mag[e.var], std::abs(e.c));
    }
    for (int i = 0; i < m; ++i) {
      if (mag[i] <= 0) throw MatError("solve_sdp: variable absent from all constraints");
      dvar[i] = std::max(mag[i], 1e-10);
    }
    for (auto& blk : p.dense) {
      for (auto& t : blk.terms) t.c /= dvar[t.var];
    }
    for (auto& blk : p.diag) {
      for (auto& e : blk.entries) e.c /= dvar[e.var];
    }
  }
  Vec b = p.b;
  for (int i = 0; i < m; ++i) b[i] /= dvar[i];
  const double bscale = std::max(1.0, b.cwiseAbs().maxCoeff());

  double ntot = 0;
  for (const auto& blk : p.dense) ntot += static_cast<double>(blk.n);
  for (const auto& blk : p.diag) ntot += static_cast<double>(blk.n);
  if (opt.verbose) {
    std::fprintf(stderr, "sdp: m=%d dense_blocks=%zu diag_blocks=%zu\n", m, p.dense.size(),
                 p.diag.size());
    for (const auto& blk : p.dense) {
      std::fprintf(stderr, "  dense n=%d pool=%d terms=%zu\n", (int)blk.n,
                   (int)blk.pool.cols(), blk.terms.size());
    }
    for (const auto& blk : p.diag) {
      std::fprintf(stderr, "  diag n=%d entries=%zu\n", (int)blk.n, blk.entries.size());
    }
  }

  std::vector<DenseState> ds(p.dense.size());
  std::vector<DiagState> gs(p.diag.size());
  for (std::size_t k = 0; k < p.dense.size(); ++k) {
    const double eta = 10.0 * (1.0 + p.dense[k].c0.norm());
    ds[k].x = eta * Mat::Identity(p.dense[k].n, p.dense[k].n);
    ds[k].z = ds[k].x;
  }
  for (std::size_t k = 0; k < p.diag.size(); ++k) {
    gs[k].x = 10.0 * (Vec::Ones(p.diag[k].n) + p.diag[k].c0.cwiseAbs());
    gs[k].z = gs[k].x;
  }
  Vec y = Vec::Zero(m);

  double best_err = kInf;
  Vec best_y = y;
  double best_gap = kInf, best_pres = kInf, best_dres = kInf;
  int slow = 0;

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    // Residuals.
    Vec r = -b;  // r_i = -b_i - tr(F_i Z)
    double mu = 0.0, pobj = 0.0, dres = 0.0;
    for (std::size_t k = 0; k < p.dense.size(); ++k) {
      const auto& blk = p.dense[k];
      auto& st = ds[k];
      st.ez = blk.pool.transpose() * st.z * blk.pool;
      for (const auto& t : blk.terms) r[t.var] -= t.c * st.ez(t.pu, t.pv);
      st.rd = blk.c0 + assemble_var_comb(blk, y) - st.x;
      dres = std::max(dres, st.rd.norm() / (1.0 + blk.c0.norm()));
      mu += st.x.cwiseProduct(st.z).sum();
      pobj += blk.c0.cwiseProduct(st.z).sum();
    }
    for (std::size_t k = 0; k < p.diag.size(); ++k) {
      const auto& blk = p.diag[k];
      auto& st = gs[k];
      Vec fy = Vec::Zero(blk.n);
      for (const auto& e : blk.entries) {
        r[e.var] -= e.c * st.z[e.index];
        fy[e.index] += e.c * y[e.var];
      }
      st.rd = blk.c0 + fy - st.x;
      dres = std::max(dres, st.rd.norm() / (1.0 + blk.c0.norm()));
      mu += st.x.dot(st.z);
      pobj += blk.c0.dot(st.z);
    }
    mu /= ntot;
    const double dobj = b.dot(y);
    const double gap = std::abs(mu * ntot) / (1.0 + std::abs(pobj) + std::abs(dobj));
    double zscale = 0.0;
    for (const auto& st : ds) zscale = std::max(zscale, st.z.norm());
    for (const auto& st : gs) zscale = std::max(zscale, st.z.norm());
    const double pres = r.cwiseAbs().maxCoeff() / std::max(bscale, 0.01 * zscale);

    if (opt.verbose) {
      std::fprintf(stderr, "it %3d  mu %.2e  gap %.2e  pres %.2e  dres %.2e  obj %.8e\n",
                   iter, mu, gap, pres, dres, dobj);
    }
    const double err = std::max({gap, pres, dres});
    if (err < best_err) {
      best_err = err;
      best_y = y;
      best_gap = gap;
      best_pres = pres;
      best_dres = dres;
      slow = 0;
    } else if (++slow > 25) {
      out.status = SolveStatus::stalled;
      break;
    }
    if (gap <= opt.tol && pres <= opt.tol && dres <= opt.tol) {
      best_y = y;
      best_gap = gap;
      best_pres = pres;
      best_dres = dres;
      out.status = SolveStatus::optimal;
      out.iterations = iter;
      break;
    }
    if (iter == opt.max_iter - 1) {
      out.status = SolveStatus::max_iterations;
      out.iterations = iter;
      break;
    }

    // NT scalings.
    bool nt_ok = true;
    for (std::size_t k = 0; k < p.dense.size(); ++k) {
      auto& st = ds[k];
      st.lltx.compute(st.x);
      st.lltz.compute(st.z);
      if (st.lltx.info() != Eigen::Success || st.lltz.info() != Eigen::Success) {
        nt_ok = false;
        break;
      }
      const Mat lx = st.lltx.matrixL();
      Eigen::SelfAdjointEigenSolver<Mat> es(lx.transpose() * st.z * lx);
      if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0) {
        nt_ok = false;
        break;
      }
      const Mat msqrt = es.eigenvectors() *
                        es.eigenvalues().cwiseSqrt().asDiagonal() *
                        es.eigenvectors().transpose();
      // G = Lx^-T sqrt(Lx^T Z Lx) Lx^-1
      Mat tmp = lx.triangularView<Eigen::Lower>().transpose().solve(msqrt);
      st.g = lx.triangularView<Eigen::Lower>()
                 .transpose()
                 .solve(tmp.transpose())
                 .transpose();
      st.g = 0.5 * (st.g + st.g.transpose());
      st.xinv = st.lltx.solve(Mat::Identity(st.x.rows(), st.x.cols()));
      st.gp = st.g * p.dense[k].pool;
      st.gram = p.dense[k].pool.transpose() * st.gp;
    }
    if (!nt_ok) {
      out.status = (best_err < 1e-4) ? SolveStatus::stalled : SolveStatus::numerical_error;
      break;
    }
    for (auto& st : gs) st.g2 = st.z.cwiseQuotient(st.x);

    // Schur complement H_ij = tr(F_i G F_j G).
    Mat h = Mat::Zero(m, m);
    for (std::size_t k = 0; k < p.dense.size(); ++k) {
      const auto& blk = p.dense[k];
      const Mat& d = ds[k].gram;
      const auto& ts = blk.terms;
      for (std::size_t a = 0; a < ts.size(); ++a) {
        for (std::size_t bidx = a; bidx < ts.size(); ++bidx) {
          const auto& ta = ts[a];
          const auto& tb = ts[bidx];
          const double val = 0.5 * ta.c * tb.c *
                             (d(ta.pv, tb.pu) * d(ta.pu, tb.pv) +
                              d(ta.pv, tb.pv) * d(ta.pu, tb.pu));
          if (ta.var == tb.var && a != bidx) {
            h(ta.var, ta.var) += 2.0 * val;
          } else {
            h(std::min(ta.var, tb.var), std::max(ta.var, tb.var)) += val;
          }
        }
      }
    }
    for (std::size_t k = 0; k < p.diag.size(); ++k) {
      const auto& blk = p.diag[k];
      const Vec& g2 = gs[k].g2;
      for (std::size_t a = 0; a < blk.entries.size(); ++a) {
        for (std::size_t bidx = a; bidx < blk.entries.size(); ++bidx) {
          const auto& ea = blk.entries[a];
          const auto& eb = blk.entries[bidx];
          if (ea.index != eb.index) continue;
          const double val = ea.c * eb.c * g2[ea.index];
          if (ea.var == eb.var && a != bidx) {
            h(ea.var, ea.var) += 2.0 * val;
          } else {
            h(std::min(ea.var, eb.var), std::max(ea.var, eb.var)) += val;
          }
        }
      }
    }
    h = h.selfadjointView<Eigen::Upper>();

    Eigen::LLT<Mat> llth;
    double ridge = 0.0;
    const double hstep = std::max(1e-300, h.diagonal().maxCoeff());
    for (int attempt = 0; attempt < 10; ++attempt) {
      Mat hr = h;
      if (ridge > 0) hr.diagonal().array() += ridge;
      llth.compute(hr);
      if (llth.info() == Eigen::Success) break;
      ridge = (ridge == 0.0) ? 1e-13 * hstep : ridge * 100.0;
    }
    if (llth.info() != Eigen::Success) {
      out.status = SolveStatus::numerical_error;
      break;
    }
    const auto solve_h = [&](const Vec& rhs) {
      Vec sol = llth.solve(rhs);
      sol += llth.solve(rhs - h * sol);  // one round of iterative refinement
      return sol;
    };

    // Direction for a given centering target; rc_scale = sigma*mu (0 => affine).
    std::vector<Mat> rc_dense(p.dense.size());
    std::vector<Vec> rc_diag(p.diag.size());
    std::vector<Mat> dx_dense(p.dense.size()), dz_dense(p.dense.size());
    std::vector<Vec> dx_diag(p.diag.size()), dz_diag(p.diag.size());
    Vec dy(m);

    // Mehrotra correction terms from the affine direction (empty on the
    // predictor pass).
    std::vector<Mat> corr_dense;
    std::vector<Vec> corr_diag;

    auto compute_direction = [&](double sig_mu) {
      Vec rhs = -r;
      for (std::size_t k = 0; k < p.dense.size(); ++k) {
        const auto& blk = p.dense[k];
        auto& st = ds[k];
        rc_dense[k] = -st.z;
        if (sig_mu > 0) rc_dense[k] += sig_mu * st.xinv;
        if (!corr_dense.empty()) rc_dense[k] -= corr_dense[k];
        const Mat t = rc_dense[k] - st.g * st.rd * st.g;
        const Mat et = blk.pool.transpose() * t * blk.pool;
        for (const auto& tm : blk.terms) rhs[tm.var] += tm.c * et(tm.pu, tm.pv);
      }
      for (std::size_t k = 0; k < p.diag.size(); ++k) {
        auto& st = gs[k];
        rc_diag[k] = -st.z;
        if (sig_mu > 0) rc_diag[k] += sig_mu * st.x.cwiseInverse();
        if (!corr_diag.empty()) rc_diag[k] -= corr_diag[k];
        const Vec t = rc_diag[k] - st.g2.cwiseProduct(st.rd);
        for (const auto& e : p.diag[k].entries) rhs[e.var] += e.c * t[e.index];
      }
      dy = solve_h(rhs);
      for (std::size_t k = 0; k < p.dense.size(); ++k) {
        auto& st = ds[k];
        dx_dense[k] = st.rd + assemble_var_comb(p.dense[k], dy);
        dz_dense[k] = rc_dense[k] - st.g * dx_dense[k] * st.g;
        dz_dense[k] = 0.5 * (dz_dense[k] + dz_dense[k].transpose());
      }
      for (std::size_t k = 0; k < p.diag.size(); ++k) {
        auto& st = gs[k];
        Vec fy = Vec::Zero(p.diag[k].n);
        for (const auto& e : p.diag[k].entries) fy[e.index] += e.c * dy[e.var];
        dx_diag[k] = st.rd + fy;
        dz_diag[k] = rc_diag[k] - st.g2.cwiseProduct(dx_diag[k]);
      }
    };

    auto step_lengths = [&](double& ad, double& ap) {
      ad = kInf;
      ap = kInf;
      for (std::size_t k = 0; k < p.dense.size(); ++k) {
        ad = std::min(ad, max_step(ds[k].lltx, dx_dense[k]));
        ap = std::min(ap, max_step(ds[k].lltz, dz_dense[k]));
      }
      for (std::size_t k = 0; k < p.diag.size(); ++k) {
        ad = std::min(ad, max_step_diag(gs[k].x, dx_diag[k]));
        ap = std::min(ap, max_step_diag(gs[k].z, dz_diag[k]));
      }
    };

    // Predictor.
    compute_direction(0.0);
    double ad, ap;
    step_lengths(ad, ap);
    const double aa_d = std::min(1.0, ad), aa_p = std::min(1.0, ap);
    double mu_aff = 0.0;
    for (std::size_t k = 0; k < p.dense.size(); ++k) {
      mu_aff += (ds[k].x + aa_d * dx_dense[k])
                    .cwiseProduct(ds[k].z + aa_p * dz_dense[k])
                    .sum();
    }
    for (std::size_t k = 0; k < p.diag.size(); ++k) {
      mu_aff += (gs[k].x + aa_d * dx_diag[k]).dot(gs[k].z + aa_p * dz_diag[k]);
    }
    mu_aff = std::max(0.0, mu_aff / ntot);
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::clamp(sigma, 1e-6, 0.9999);

    // Corrector with the second-order term sym(X^-1 dX_aff dZ_aff); fall back
    // to the plain centering step when it shortens the step.
    corr_dense.resize(p.dense.size());
    corr_diag.resize(p.diag.size());
    for (std::size_t k = 0; k < p.dense.size(); ++k) {
      const Mat prod = ds[k].xinv * dx_dense[k] * dz_dense[k];
      corr_dense[k] = 0.5 * (prod + prod.transpose());
    }
    for (std::size_t k = 0; k < p.diag.size(); ++k) {
      corr_diag[k] = dx_diag[k].cwiseProduct(dz_diag[k]).cwiseQuotient(gs[k].x);
    }
    compute_direction(sigma * mu);
    step_lengths(ad, ap);
    if (std::min(ad, ap) < 0.5 * std::min(aa_d, aa_p)) {
      corr_dense.clear();
      corr_diag.clear();
      compute_direction(sigma * mu);
      step_lengths(ad, ap);
    }
    corr_dense.clear();
    corr_diag.clear();
    const double damp =
        (iter < 4) ? 0.9 : ((ad > 0.9 && ap > 0.9) ? 0.99 : 0.97);
    const double sd = std::min(1.0, damp * ad);
    const double sp = std::min(1.0, damp * ap);
    if (sd < 1e-10 && sp < 1e-10) {
      out.status = SolveStatus::stalled;
      break;
    }
    y += sd * dy;
    for (std::size_t k = 0; k < p.dense.size(); ++k) {
      ds[k].x += sd * dx_dense[k];
      ds[k].z += sp * dz_dense[k];
      ds[k].x = 0.5 * (ds[k].x + ds[k].x.transpose());
      ds[k].z = 0.5 * (ds[k].z + ds[k].z.transpose());
    }
    for (std::size_t k = 0; k < p.diag.size(); ++k) {
      gs[k].x += sd * dx_diag[k];
      gs[k].z += sp * dz_diag[k];
    }
  }

  out.y = best_y.cwiseQuotient(dvar);
  out.objective = prob.b.dot(out.y);
  out.gap = best_gap;
  out.primal_res = best_pres;
  out.dual_res = best_dres;
  if (out.status == SolveStatus::numerical_error && best_err < 1e-6) {
    out.status = SolveStatus::stalled;
  }
  return out;
}

}  // namespace qi::lmi
