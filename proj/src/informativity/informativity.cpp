#include "informativity/informativity.hpp"

#include <chrono>
#include <cmath>

namespace qi::informativity {

using datagen::SingleModel;
using datagen::StructuredModel;
using lmi::LmiProblem;
using lmi::LmiResult;
using lmi::MatExpr;
using lmi::VarRef;

namespace {

constexpr double kAlphaCap = 1e8;
constexpr double kTraceCapBig = 1e8;
constexpr double kStrictFloor = 1e-8;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Blocks of N partitioned as q | ra | rb.
struct NSlices {
  Mat n11, n12a, n12b, n22aa, n22ab, n22bb;
};

NSlices slice_n(const Mat& n, Index q, Index ra, Index rb) {
  NSlices s;
  s.n11 = n.block(0, 0, q, q);
  s.n12a = n.block(0, q, q, ra);
  s.n12b = n.block(0, q + ra, q, rb);
  s.n22aa = n.block(q, q, ra, ra);
  s.n22ab = n.block(q, q + ra, ra, rb);
  s.n22bb = n.block(q + ra, q + ra, rb, rb);
  return s;
}

// M(P, L, beta) - alpha * diag(N, 0) of the stabilization LMI, evaluated
// numerically (blocks q | q | m | q with q = P.dim).
Mat qstab_lmi_value(const Mat& p, const Mat& l, double beta, double alpha, const Mat& n) {
  const Index q = p.rows(), m = l.rows();
  const Index dim = 3 * q + m;
  Mat big = Mat::Zero(dim, dim);
  big.block(0, 0, q, q) = p - beta * Mat::Identity(q, q);
  big.block(q, q, q, q) = -p;
  big.block(q, 2 * q, q, m) = -l.transpose();
  big.block(2 * q, q, m, q) = -l;
  big.block(2 * q, 2 * q + m, m, q) = l;
  big.block(2 * q + m, 2 * q, q, m) = l.transpose();
  big.block(2 * q + m, 2 * q + m, q, q) = p;
  big.topLeftCorner(n.rows(), n.cols()) -= alpha * n;
  return big;
}

double rel_min_eig(const Mat& m) {
  return min_eig(SymMat(Mat(0.5 * (m + m.transpose())), 1e-3)) / tol_scale(m);
}

bool equivalence_flag(const SingleModel& sm, Index q) {
  const Mat& e = sm.e;
  Mat j = Mat::Zero(e.rows(), q);
  j.topRows(q) = Mat::Identity(q, q);
  const Mat epinv = e.completeOrthogonalDecomposition().pseudoInverse();
  if ((j - e * (epinv * j)).norm() <= 1e-9) return true;
  const SymMat phi22 = sm.phi_hat.n22();
  if (phi22.dim() > 0) {
    const Vec ev = eig_sym(phi22).values;
    if (ev.maxCoeff() < -1e-10 * tol_scale(phi22.mat())) return true;
  }
  return false;
}

// Adds the -alpha * N terms of a grid whose first three block rows span N.
void add_alpha_n(LmiProblem& p, std::vector<std::vector<MatExpr>>& grid, VarRef alpha,
                 const NSlices& s) {
  grid[0][0] = grid[0][0] - p.smul(s.n11, alpha);
  grid[0][1] = grid[0][1] - p.smul(s.n12a, alpha);
  grid[0][2] = grid[0][2] - p.smul(s.n12b, alpha);
  grid[1][1] = grid[1][1] - p.smul(s.n22aa, alpha);
  grid[1][2] = grid[1][2] - p.smul(s.n22ab, alpha);
  grid[2][2] = grid[2][2] - p.smul(s.n22bb, alpha);
}

SynthesisResult solver_failure(SynthesisResult res, const LmiResult& r, const Timer& tm) {
  res.status = SynthStatus::solver_error;
  res.residual = -1.0;
  res.aux["solver_metrics"] =
      (Mat(1, 3) << r.primal_res, r.dual_res, r.gap).finished();
  res.wall_time_ms = tm.ms();
  return res;
}

}  // namespace

ConsistencyMatrix build_n(const DataRecord& data, const PerturbationModel& model) {
  if (!model.is_single()) throw MatError("build_n: model must be single-QMI");
  const auto& sm = model.as_single();
  const Mat bx = data.stacked();
  if (sm.e.rows() != bx.rows() || sm.phi_hat.r() != data.t()) {
    throw MatError("build_n: model dimensions do not match the data");
  }
  Mat ex(bx.rows(), sm.e.cols() + bx.cols());
  ex.leftCols(sm.e.cols()) = sm.e;
  ex.rightCols(bx.cols()) = bx;
  const Index q = data.q(), r = data.r();
  ConsistencyMatrix cm{
      qmi::QmiSet(SymMat(ex * sm.phi_hat.n().mat() * ex.transpose(), 1e-6), q, r), false, 0,
      Mat()};
  cm.in_pi = qmi::is_matrix_ellipsoid(cm.n_set).has_value();
  cm.v_basis = range_basis(cm.n_set.n22());
  cm.n22_rank = cm.v_basis.cols();
  return cm;
}

qmi::QmiSet structured_consistency(const DataRecord& data, const SymMat& phi) {
  const Mat bx = data.stacked();
  Mat ix(bx.rows(), bx.rows() + bx.cols());
  ix.leftCols(bx.rows()) = Mat::Identity(bx.rows(), bx.rows());
  ix.rightCols(bx.cols()) = bx;
  return qmi::QmiSet(SymMat(ix * phi.mat() * ix.transpose(), 1e-6), data.q(), data.r());
}

SynthesisResult synth_qstab(const DataRecord& data, const PerturbationModel& model) {
  Timer tm;
  SynthesisResult res;
  res.method = "qstab";
  const auto cm = build_n(data, model);
  const Index n = data.q(), ra = data.x.rows(), rb = data.u.rows();
  const Mat nmat = cm.n_set.n().mat();
  const double nscale = std::max(1.0, nmat.norm());
  const NSlices sl = slice_n(nmat / nscale, n, ra, rb);
  res.necessary_and_sufficient = equivalence_flag(model.as_single(), n);

  // beta_form: a singular N22 forces zero eigenvalues onto the LMI, so the
  // uniform margin shift has no interior; maximize beta itself instead, with
  // fixed positivity floors on the strict blocks.
  const auto attempt = [&](bool beta_form) {
    LmiProblem p;
    const VarRef pv = p.add_symmetric("P", n);
    const VarRef lv = p.add_rectangular("L", rb, n);
    const VarRef av = p.add_scalar("alpha");
    std::vector<std::vector<MatExpr>> grid(4, std::vector<MatExpr>(4));
    grid[0][0] = p.v(pv);
    grid[1][1] = LmiProblem::constant(Mat::Zero(ra, ra)) - p.v(pv);
    grid[1][2] = -1.0 * p.vmul(Mat::Identity(ra, ra), lv, Mat::Identity(rb, rb), true);
    grid[2][2] = LmiProblem::constant(Mat::Zero(rb, rb));
    grid[2][3] = p.v(lv);
    grid[3][3] = p.v(pv);
    add_alpha_n(p, grid, av, sl);
    VarRef bv{};
    if (beta_form) {
      bv = p.add_scalar("beta");
      grid[0][0] = grid[0][0] - p.smul(Mat::Identity(n, n), bv);
    }
    p.add_psd(std::move(grid), !beta_form);
    if (beta_form) {
      p.add_psd(p.v(pv) - LmiProblem::constant(Mat(kStrictFloor * Mat::Identity(n, n))),
                false);
      p.add_nonneg(p.v(bv));
      p.add_nonneg(LmiProblem::scalar_const(1e3) - p.v(bv));
      p.set_objective(true, {{bv, Mat::Identity(1, 1)}});
    } else {
      p.add_psd(p.v(pv), true);
    }
    p.add_nonneg(p.v(av));
    p.add_nonneg(LmiProblem::scalar_const(kAlphaCap) - p.v(av));
    p.add_nonneg(LmiProblem::scalar_const(static_cast<double>(n)) - p.trace_expr(pv));
    LmiResult r = beta_form ? p.solve_objective() : p.solve_max_margin();
    const double margin = beta_form ? (r.acceptable() ? r.scalar(bv) : -1.0) : r.margin;
    return std::tuple<LmiResult, double, VarRef, VarRef, VarRef>(std::move(r), margin, pv,
                                                                 lv, av);
  };

  auto [r, t, pv, lv, av] = attempt(false);
  if (r.acceptable() && t < kCertMargin && cm.n22_rank < ra + rb) {
    auto second = attempt(true);
    if (std::get<0>(second).acceptable() && std::get<1>(second) >= kCertMargin) {
      std::tie(r, t, pv, lv, av) = std::move(second);
    }
  }
  if (!r.acceptable()) return solver_failure(std::move(res), r, tm);
  if (t < kCertMargin) {
    res.status = SynthStatus::not_certified;
    res.residual = t;
    res.wall_time_ms = tm.ms();
    return res;
  }
  res.p_or_y = r.value(pv);
  res.l = r.value(lv);
  res.alpha = r.scalar(av) / nscale;
  res.beta = t;
  res.k = res.l * res.p_or_y.inverse();

  // Re-verify both the lowered LMI and the pre-Schur S-lemma form.
  const double r1 =
      rel_min_eig(qstab_lmi_value(res.p_or_y, res.l, res.beta, res.alpha, nmat));
  Mat ik(n + rb, n);
  ik.topRows(n) = Mat::Identity(n, n);
  ik.bottomRows(rb) = res.k;
  Mat m18 = Mat::Zero(2 * n + rb, 2 * n + rb);
  m18.topLeftCorner(n, n) = res.p_or_y;
  m18.bottomRightCorner(n + rb, n + rb) = -ik * res.p_or_y * ik.transpose();
  const bool pre_ok = qmi::slem_certificate_check(SymMat(m18, 1e-6), cm.n_set.n(),
                                                  {res.alpha, res.beta}, n, 1e-7);
  res.residual = r1;
  res.status = (r1 >= -1e-7 && pre_ok) ? SynthStatus::informative_certified
                                       : SynthStatus::solver_error;
  res.wall_time_ms = tm.ms();
  return res;
}

SynthesisResult synth_qstab_stable(const DataRecord& data, const PerturbationModel& model) {
  Timer tm;
  SynthesisResult res;
  res.method = "qstab_stable";
  const auto cm = build_n(data, model);
  const Index n = data.q(), r_all = data.r(), rb = data.u.rows();
  res.necessary_and_sufficient = equivalence_flag(model.as_single(), n);
  if (!cm.in_pi) {
    // By the ellipsoid necessity of the stabilization LMI, N outside Pi means
    // the data cannot be informative.
    res.status = SynthStatus::not_certified;
    res.aux["in_pi"] = Mat::Zero(1, 1);
    res.wall_time_ms = tm.ms();
    return res;
  }
  const Index rank = cm.n22_rank;
  const Mat v = cm.v_basis;
  const Mat vplus = v.topRows(n);
  const Mat vminus = v.bottomRows(rb);
  Mat embed = Mat::Zero(n + r_all, n + rank);
  embed.topLeftCorner(n, n) = Mat::Identity(n, n);
  embed.bottomRightCorner(r_all, rank) = v;
  const Mat nmat = cm.n_set.n().mat();
  const double nscale = std::max(1.0, nmat.norm());
  const Mat nbar = embed.transpose() * (nmat / nscale) * embed;

  LmiProblem p;
  const VarRef pv = p.add_symmetric("Pbar", n);
  const VarRef yv = p.add_rectangular("Ybar", rank, n);
  const VarRef av = p.add_scalar("alphabar");
  std::vector<std::vector<MatExpr>> grid(3, std::vector<MatExpr>(3));
  grid[0][0] = p.v(pv) - p.smul(Mat(nbar.topLeftCorner(n, n)), av);
  grid[0][1] = -1.0 * p.smul(Mat(nbar.topRightCorner(n, rank)), av);
  grid[1][1] = -1.0 * p.smul(Mat(nbar.bottomRightCorner(rank, rank)), av);
  grid[1][2] = p.v(yv);
  grid[2][2] = p.v(pv);
  p.add_psd(std::move(grid), true);
  p.add_psd(p.v(pv), true);
  p.add_nonneg(p.v(av), true);  // alphabar > 0
  p.add_nonneg(LmiProblem::scalar_const(kAlphaCap) - p.v(av));
  p.add_nonneg(LmiProblem::scalar_const(static_cast<double>(n)) - p.trace_expr(pv));
  p.add_equality(p.v(pv) - p.vmul(vplus, yv, Mat::Identity(n, n)));

  const LmiResult r = p.solve_max_margin();
  if (!r.acceptable()) return solver_failure(std::move(res), r, tm);
  if (r.margin < kCertMargin) {
    res.status = SynthStatus::not_certified;
    res.residual = r.margin;
    res.wall_time_ms = tm.ms();
    return res;
  }
  res.p_or_y = r.value(pv);
  res.l = vminus * r.value(yv);
  res.alpha = r.scalar(av) / nscale;
  res.k = res.l * res.p_or_y.inverse();
  res.aux["ybar"] = r.value(yv);
  res.aux["v_minus"] = vminus;
  res.aux["in_pi"] = Mat::Ones(1, 1);

  // Recover beta for the original LMI: largest beta with R >= diag(beta I, 0).
  const Mat rmat = qstab_lmi_value(res.p_or_y, res.l, 0.0, res.alpha, nmat);
  const double beta = min_eig(schur_complement(SymMat(0.5 * (rmat + rmat.transpose()), 1e-5), n));
  res.beta = std::max(beta, 0.0);
  const double r1 = rel_min_eig(qstab_lmi_value(res.p_or_y, res.l, res.beta, res.alpha, nmat));
  res.residual = r1;
  res.status = (r1 >= -1e-7) ? SynthStatus::informative_certified : SynthStatus::solver_error;
  res.wall_time_ms = tm.ms();
  return res;
}

namespace {

// Shared assembly for the performance LMIs; hinf toggles the -I shift and the
// gamma^2 corner.
struct PerfProblem {
  LmiProblem p;
  VarRef yv, lv, av;
  std::optional<VarRef> zv;
  int main_block = -1;
};

PerfProblem perf_problem(const NSlices& sl, Index n, Index m, Index pdim, const Mat& c,
                         const Mat& d, bool hinf, double gamma, bool with_z) {
  PerfProblem pp;
  LmiProblem& p = pp.p;
  pp.yv = p.add_symmetric("Y", n);
  pp.lv = p.add_rectangular("L", m, n);
  pp.av = p.add_scalar("alpha");
  const MatExpr cyl = p.vmul(c, pp.yv, Mat::Identity(n, n)) +
                      p.vmul(d, pp.lv, Mat::Identity(n, n));
  std::vector<std::vector<MatExpr>> grid(5, std::vector<MatExpr>(5));
  grid[0][0] = hinf ? (p.v(pp.yv) - LmiProblem::constant(Mat::Identity(n, n)))
                    : p.v(pp.yv);
  grid[1][1] = LmiProblem::constant(Mat::Zero(n, n));
  grid[1][3] = p.v(pp.yv);
  grid[2][2] = LmiProblem::constant(Mat::Zero(m, m));
  grid[2][3] = p.v(pp.lv);
  grid[3][3] = p.v(pp.yv);
  grid[3][4] = transpose(cyl);
  grid[4][4] = LmiProblem::constant((hinf ? gamma * gamma : 1.0) *
                                    Mat::Identity(pdim, pdim));
  add_alpha_n(p, grid, pp.av, sl);
  pp.main_block = p.add_psd(std::move(grid), true);

  std::vector<std::vector<MatExpr>> g2(2, std::vector<MatExpr>(2));
  g2[0][0] = p.v(pp.yv);
  g2[0][1] = transpose(cyl);
  g2[1][1] = LmiProblem::constant((hinf ? gamma * gamma : 1.0) *
                                  Mat::Identity(pdim, pdim));
  p.add_psd(std::move(g2), true);

  if (with_z) {
    pp.zv = p.add_symmetric("Z", n);
    std::vector<std::vector<MatExpr>> g3(2, std::vector<MatExpr>(2));
    g3[0][0] = p.v(*pp.zv);
    g3[0][1] = LmiProblem::constant(Mat::Identity(n, n));
    g3[1][1] = p.v(pp.yv);
    p.add_psd(std::move(g3), true);
  }
  p.add_nonneg(p.v(pp.av));
  p.add_nonneg(LmiProblem::scalar_const(kAlphaCap) - p.v(pp.av));
  p.add_nonneg(LmiProblem::scalar_const(kTraceCapBig) - p.trace_expr(pp.yv));
  return pp;
}

// Pre-Schur re-verification for the performance syntheses.
double perf_residual(const Mat& y, const Mat& l, double alpha, double beta, const Mat& nmat,
                     const Mat& c, const Mat& d, bool hinf, double gamma) {
  const Index n = y.rows(), m = l.rows();
  const Mat cyl = c * y + d * l;
  const double g2 = hinf ? gamma * gamma : 1.0;
  const Mat w = y - cyl.transpose() * cyl / g2;
  Mat yl(n + m, n);
  yl.topRows(n) = y;
  yl.bottomRows(m) = l;
  Mat mm = Mat::Zero(2 * n + m, 2 * n + m);
  mm.topLeftCorner(n, n) = hinf ? Mat(y - Mat::Identity(n, n)) : y;
  mm.bottomRightCorner(n + m, n + m) = -yl * w.inverse() * yl.transpose();
  Mat res = mm - alpha * nmat;
  res.topLeftCorner(n, n) -= beta * Mat::Identity(n, n);
  return rel_min_eig(res);
}

}  // namespace

SynthesisResult synth_h2(const DataRecord& data, const PerturbationModel& model,
                         const Mat& c, const Mat& d, double gamma) {
  Timer tm;
  SynthesisResult res;
  res.method = "h2";
  res.gamma = gamma;
  if (gamma <= 0) throw MatError("synth_h2: gamma must be positive");
  const auto cm = build_n(data, model);
  const Index n = data.q(), m = data.u.rows(), pdim = c.rows();
  const Mat nmat = cm.n_set.n().mat();
  const double nscale = std::max(1.0, nmat.norm());
  const NSlices sl = slice_n(nmat / nscale, n, n, m);
  res.necessary_and_sufficient = equivalence_flag(model.as_single(), n);

  PerfProblem pp = perf_problem(sl, n, m, pdim, c, d, false, 0.0, true);
  pp.p.add_nonneg(LmiProblem::scalar_const(gamma * gamma) - pp.p.trace_expr(*pp.zv), true);
  const LmiResult r = pp.p.solve_max_margin();
  if (!r.acceptable()) return solver_failure(std::move(res), r, tm);
  if (r.margin < kCertMargin) {
    res.status = SynthStatus::not_certified;
    res.residual = r.margin;
    res.wall_time_ms = tm.ms();
    return res;
  }
  res.p_or_y = r.value(pp.yv);
  res.l = r.value(pp.lv);
  res.alpha = r.scalar(pp.av) / nscale;
  res.beta = r.margin;
  res.k = res.l * res.p_or_y.inverse();
  res.aux["z"] = r.value(*pp.zv);
  res.residual = perf_residual(res.p_or_y, res.l, res.alpha, res.beta, nmat, c, d, false, 0.0);
  res.status = (res.residual >= -1e-7) ? SynthStatus::informative_certified
                                       : SynthStatus::solver_error;
  res.wall_time_ms = tm.ms();
  return res;
}

SynthesisResult synth_h2_optimal(const DataRecord& data, const PerturbationModel& model,
                                 const Mat& c, const Mat& d) {
  Timer tm;
  SynthesisResult res;
  res.method = "h2_optimal";
  const auto cm = build_n(data, model);
  const Index n = data.q(), m = data.u.rows(), pdim = c.rows();
  const Mat nmat = cm.n_set.n().mat();
  const double nscale = std::max(1.0, nmat.norm());
  const NSlices sl = slice_n(nmat / nscale, n, n, m);
  res.necessary_and_sufficient = equivalence_flag(model.as_single(), n);

  // Feasibility probe without the trace bound; its Z value seeds the upper
  // bracket of the J = gamma^2 search.
  double j_hi = 0.0;
  {
    PerfProblem probe = perf_problem(sl, n, m, pdim, c, d, false, 0.0, true);
    probe.p.add_nonneg(LmiProblem::scalar_const(kTraceCapBig) -
                       probe.p.trace_expr(*probe.zv));
    const LmiResult r = probe.p.solve_max_margin();
    if (!r.acceptable()) return solver_failure(std::move(res), r, tm);
    if (r.margin < kCertMargin) {
      res.status = SynthStatus::not_certified;
      res.residual = r.margin;
      res.wall_time_ms = tm.ms();
      return res;
    }
    j_hi = std::max(r.value(*probe.zv).trace() * (1.0 + 1e-6), 1e-12);
  }

  // The trace-level feasibility is monotone in J, so the optimum is found by
  // bisection over the (robust) max-margin feasibility solves.
  SynthesisResult best = synth_h2(data, model, c, d, std::sqrt(j_hi));
  if (!best.certified()) return best;  // bracket must be feasible, else report
  double lo = 0.0, hi = j_hi;
  for (int it = 0; it < 60 && hi - lo > 1e-4 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    SynthesisResult trial = synth_h2(data, model, c, d, std::sqrt(mid));
    if (trial.certified()) {
      hi = mid;
      best = std::move(trial);
    } else if (trial.status == SynthStatus::not_certified) {
      lo = mid;
    } else {
      lo = mid;  // treat a rare solver failure as infeasible (conservative)
    }
  }
  res = std::move(best);
  res.method = "h2_optimal";
  res.gamma = std::sqrt(hi);
  res.wall_time_ms = tm.ms();
  return res;
}

SynthesisResult synth_hinf(const DataRecord& data, const PerturbationModel& model,
                           const Mat& c, const Mat& d, double gamma) {
  Timer tm;
  SynthesisResult res;
  res.method = "hinf";
  res.gamma = gamma;
  if (gamma <= 0) throw MatError("synth_hinf: gamma must be positive");
  const auto cm = build_n(data, model);
  const Index n = data.q(), m = data.u.rows(), pdim = c.rows();
  const Mat nmat = cm.n_set.n().mat();
  const double nscale = std::max(1.0, nmat.norm());
  const NSlices sl = slice_n(nmat / nscale, n, n, m);
  res.necessary_and_sufficient = equivalence_flag(model.as_single(), n);

  PerfProblem pp = perf_problem(sl, n, m, pdim, c, d, true, gamma, false);
  const LmiResult r = pp.p.solve_max_margin();
  if (!r.acceptable()) return solver_failure(std::move(res), r, tm);
  if (r.margin < kCertMargin) {
    res.status = SynthStatus::not_certified;
    res.residual = r.margin;
    res.wall_time_ms = tm.ms();
    return res;
  }
  res.p_or_y = r.value(pp.yv);
  res.l = r.value(pp.lv);
  res.alpha = r.scalar(pp.av) / nscale;
  res.beta = r.margin;
  res.k = res.l * res.p_or_y.inverse();
  res.residual = perf_residual(res.p_or_y, res.l, res.alpha, res.beta, nmat, c, d, true, gamma);
  res.status = (res.residual >= -1e-7) ? SynthStatus::informative_certified
                                       : SynthStatus::solver_error;
  res.wall_time_ms = tm.ms();
  return res;
}

SynthesisResult synth_ar(const DataRecord& data, const PerturbationModel& model) {
  Timer tm;
  SynthesisResult res;
  res.method = "ar";
  if (data.kind != datagen::DataKind::autoregressive) {
    throw MatError("synth_ar: data record is not autoregressive");
  }
  const Index pdim = data.q();             // p
  const Index sl_dim = data.x.rows();      // (p+m)L
  const Index m = data.u.rows();
  const Index rest = sl_dim - pdim;        // p(L-1) + mL
  const auto cm = build_n(data, model);
  const Mat nmat = cm.n_set.n().mat();
  const double nscale = std::max(1.0, nmat.norm());
  const NSlices sln = slice_n(nmat / nscale, pdim, sl_dim, m);
  res.necessary_and_sufficient = equivalence_flag(model.as_single(), pdim);

  const Index order = data.ar_order;
  const Mat j1 = datagen::ar_j1(pdim, m, order);
  const Mat j2 = datagen::ar_j2(pdim, m, order);

  Mat s1 = Mat::Zero(pdim, sl_dim);
  s1.leftCols(pdim) = Mat::Identity(pdim, pdim);
  Mat s2 = Mat::Zero(rest, sl_dim);
  s2.rightCols(rest) = Mat::Identity(rest, rest);

  const auto attempt = [&](bool beta_form) {
    LmiProblem p;
    const VarRef pv = p.add_symmetric("P", sl_dim);
    const VarRef lv = p.add_rectangular("L", m, sl_dim);
    const VarRef av = p.add_scalar("alpha");
    const MatExpr jpl = p.vmul(j1, pv, Mat::Identity(sl_dim, sl_dim)) +
                        p.vmul(j2, lv, Mat::Identity(sl_dim, sl_dim));
    std::vector<std::vector<MatExpr>> grid(5, std::vector<MatExpr>(5));
    grid[0][0] = p.vmul(s1, pv, s1.transpose());
    grid[0][3] = p.vmul(s1, pv, s2.transpose());
    grid[1][1] = LmiProblem::constant(Mat::Zero(sl_dim, sl_dim));
    grid[1][4] = p.v(pv);
    grid[2][2] = LmiProblem::constant(Mat::Zero(m, m));
    grid[2][4] = p.v(lv);
    grid[3][3] = p.vmul(s2, pv, s2.transpose());
    grid[3][4] = jpl;
    grid[4][4] = p.v(pv);
    add_alpha_n(p, grid, av, sln);
    VarRef bv{};
    if (beta_form) {
      bv = p.add_scalar("beta");
      grid[0][0] = grid[0][0] - p.smul(Mat::Identity(pdim, pdim), bv);
    }
    p.add_psd(std::move(grid), !beta_form);

    std::vector<std::vector<MatExpr>> g2(2, std::vector<MatExpr>(2));
    g2[0][0] = p.vmul(s2, pv, s2.transpose());
    g2[0][1] = jpl;
    g2[1][1] = p.v(pv);
    if (beta_form) {
      g2[0][0] = g2[0][0] - LmiProblem::constant(
                                Mat(kStrictFloor * Mat::Identity(rest, rest)));
      g2[1][1] = g2[1][1] - LmiProblem::constant(
                                Mat(kStrictFloor * Mat::Identity(sl_dim, sl_dim)));
      p.add_psd(std::move(g2), false);
      p.add_psd(p.v(pv) - LmiProblem::constant(
                              Mat(kStrictFloor * Mat::Identity(sl_dim, sl_dim))),
                false);
      p.add_nonneg(p.v(bv));
      p.add_nonneg(LmiProblem::scalar_const(1e3) - p.v(bv));
      p.set_objective(true, {{bv, Mat::Identity(1, 1)}});
    } else {
      p.add_psd(std::move(g2), true);
      p.add_psd(p.v(pv), true);
    }
    p.add_nonneg(p.v(av));
    p.add_nonneg(LmiProblem::scalar_const(kAlphaCap) - p.v(av));
    p.add_nonneg(LmiProblem::scalar_const(static_cast<double>(sl_dim)) - p.trace_expr(pv));
    LmiResult r = beta_form ? p.solve_objective() : p.solve_max_margin();
    const double margin = beta_form ? (r.acceptable() ? r.scalar(bv) : -1.0) : r.margin;
    return std::tuple<LmiResult, double, VarRef, VarRef, VarRef>(std::move(r), margin, pv,
                                                                 lv, av);
  };

  auto [r, t, pv, lv, av] = attempt(false);
  if (r.acceptable() && t < kCertMargin && cm.n22_rank < sl_dim + m) {
    auto second = attempt(true);
    if (std::get<0>(second).acceptable() && std::get<1>(second) >= kCertMargin) {
      std::tie(r, t, pv, lv, av) = std::move(second);
    }
  }
  if (!r.acceptable()) return solver_failure(std::move(res), r, tm);
  if (t < kCertMargin) {
    res.status = SynthStatus::not_certified;
    res.residual = t;
    res.wall_time_ms = tm.ms();
    return res;
  }
  res.p_or_y = r.value(pv);
  res.l = r.value(lv);
  res.alpha = r.scalar(av) / nscale;
  res.beta = t;
  res.k = res.l * res.p_or_y.inverse();

  // Pre-Schur re-verification through M_AR.
  const Mat& pm = res.p_or_y;
  const Mat jk = j1 + j2 * res.k;
  const Mat p11 = pm.topLeftCorner(pdim, pdim);
  const Mat p12 = pm.topRightCorner(pdim, rest);
  const Mat p22 = pm.bottomRightCorner(rest, rest);
  const Mat z = p22 - jk * pm * jk.transpose();
  Mat ik(sl_dim + m, sl_dim);
  ik.topRows(sl_dim) = Mat::Identity(sl_dim, sl_dim);
  ik.bottomRows(m) = res.k;
  Mat mar = Mat::Zero(pdim + sl_dim + m, pdim + sl_dim + m);
  mar.topLeftCorner(pdim, pdim) = p11;
  mar.bottomRightCorner(sl_dim + m, sl_dim + m) = -ik * pm * ik.transpose();
  Mat corr(pdim + sl_dim + m, rest);
  corr.topRows(pdim) = p12;
  corr.bottomRows(sl_dim + m) = -ik * pm * jk.transpose();
  mar -= corr * z.inverse() * corr.transpose();
  Mat resid = mar - res.alpha * nmat;
  resid.topLeftCorner(pdim, pdim) -= res.beta * Mat::Identity(pdim, pdim);
  res.residual = std::min(rel_min_eig(resid), min_eig(SymMat(z, 1e-5)) / tol_scale(z));
  res.status = (res.residual >= -1e-7) ? SynthStatus::informative_certified
                                       : SynthStatus::solver_error;
  res.wall_time_ms = tm.ms();
  return res;
}

namespace {

struct Plumbing {
  Mat lm;                // diag(I_{n_d}, U), (n_d + sumT) x (n_d + T)
  std::vector<Mat> psi;  // J sandwiched constants, dim x dim
  Index dim = 0;
  Index sum_t = 0;
};

Plumbing make_plumbing(const StructuredModel& sm) {
  Plumbing pl;
  for (const auto& term : sm.terms) pl.sum_t += term.phi_j.r();
  pl.dim = sm.n_d + pl.sum_t;
  Mat u = Mat::Zero(pl.sum_t, sm.t);
  Index off = 0;
  pl.psi.reserve(sm.terms.size());
  for (const auto& term : sm.terms) {
    const Index tj = term.phi_j.r(), nj = term.phi_j.q();
    u.middleRows(off, tj) = term.f_j;
    Mat psi = Mat::Zero(pl.dim, pl.dim);
    psi.topLeftCorner(sm.n_d, sm.n_d) =
        term.e_j * term.phi_j.n11() * term.e_j.transpose();
    psi.block(0, sm.n_d + off, sm.n_d, tj) = term.e_j * term.phi_j.n12();
    psi.block(sm.n_d + off, 0, tj, sm.n_d) =
        psi.block(0, sm.n_d + off, sm.n_d, tj).transpose();
    psi.block(sm.n_d + off, sm.n_d + off, tj, tj) = term.phi_j.n22().mat();
    pl.psi.push_back(std::move(psi));
    (void)nj;
    off += tj;
  }
  pl.lm = Mat::Zero(pl.dim, sm.n_d + sm.t);
  pl.lm.topLeftCorner(sm.n_d, sm.n_d) = Mat::Identity(sm.n_d, sm.n_d);
  pl.lm.bottomRightCorner(pl.sum_t, sm.t) = u;
  return pl;
}

}  // namespace

OuterPhiVars add_outer_phi_constraint(lmi::LmiProblem& prob, const StructuredModel& model,
                                      bool with_margin) {
  const Plumbing pl = make_plumbing(model);
  OuterPhiVars vars;
  vars.phi = prob.add_symmetric("Phi", model.n_d + model.t);
  MatExpr expr = prob.vmul(pl.lm, vars.phi, pl.lm.transpose());
  for (std::size_t j = 0; j < model.terms.size(); ++j) {
    const VarRef aj = prob.add_scalar("alpha_" + std::to_string(j));
    vars.alphas.push_back(aj);
    expr = expr - prob.smul(pl.psi[j], aj);
    prob.add_nonneg(prob.v(aj));
    prob.add_nonneg(LmiProblem::scalar_const(kAlphaCap) - prob.v(aj));
  }
  vars.block = prob.add_psd(std::move(expr), with_margin);
  return vars;
}

OuterPhiLmi build_outer_phi_lmi(const PerturbationModel& model) {
  OuterPhiLmi out;
  out.vars = add_outer_phi_constraint(out.problem, model.as_structured(), true);
  const Index dim = model.rows() + model.t();
  out.problem.add_nonneg(LmiProblem::scalar_const(kTraceCapBig) -
                         out.problem.trace_expr(out.vars.phi));
  out.problem.add_nonneg(LmiProblem::scalar_const(kTraceCapBig) +
                         out.problem.trace_expr(out.vars.phi));
  (void)dim;
  return out;
}

double outer_phi_residual(const StructuredModel& model, const SymMat& phi,
                          const std::vector<double>& alphas) {
  const Plumbing pl = make_plumbing(model);
  Mat lhs = pl.lm * phi.mat() * pl.lm.transpose();
  for (std::size_t j = 0; j < alphas.size(); ++j) lhs -= alphas[j] * pl.psi[j];
  return rel_min_eig(lhs);
}

SynthesisResult synth_structured_codesign(const DataRecord& data,
                                          const PerturbationModel& model,
                                          const CodesignOptions& opt) {
  Timer tm;
  SynthesisResult res;
  res.method = "structured_codesign";
  const auto& sm = model.as_structured();
  const Index n = data.q(), ra = data.x.rows(), rb = data.u.rows();
  const Index nd = sm.n_d, t = sm.t;
  const Mat bx = data.stacked();
  Mat w(nd, nd + t);
  w.leftCols(nd) = Mat::Identity(nd, nd);
  w.rightCols(t) = bx;
  const Mat wa = w.topRows(n);
  const Mat wb = w.middleRows(n, ra);
  const Mat wc = w.bottomRows(rb);

  LmiProblem p;
  const OuterPhiVars ov = add_outer_phi_constraint(p, sm, true);
  const VarRef pv = p.add_symmetric("P", n);
  const VarRef lv = p.add_rectangular("L", rb, n);
  std::vector<std::vector<MatExpr>> grid(4, std::vector<MatExpr>(4));
  grid[0][0] = p.v(pv) - p.vmul(wa, ov.phi, wa.transpose());
  grid[0][1] = -1.0 * p.vmul(wa, ov.phi, wb.transpose());
  grid[0][2] = -1.0 * p.vmul(wa, ov.phi, wc.transpose());
  grid[1][1] = -1.0 * p.v(pv) - p.vmul(wb, ov.phi, wb.transpose());
  grid[1][2] = -1.0 * p.vmul(Mat::Identity(ra, ra), lv, Mat::Identity(rb, rb), true) -
               p.vmul(wb, ov.phi, wc.transpose());
  grid[2][2] = -1.0 * p.vmul(wc, ov.phi, wc.transpose());
  grid[2][3] = p.v(lv);
  grid[3][3] = p.v(pv);
  p.add_psd(std::move(grid), true);
  p.add_psd(p.v(pv), true);
  p.add_nonneg(LmiProblem::scalar_const(static_cast<double>(n)) - p.trace_expr(pv));
  p.add_nonneg(LmiProblem::scalar_const(kTraceCapBig) - p.trace_expr(ov.phi));
  p.add_nonneg(LmiProblem::scalar_const(kTraceCapBig) + p.trace_expr(ov.phi));

  const LmiResult r = p.solve_max_margin();
  const bool solver_ok = r.acceptable();
  bool certified = solver_ok && r.margin >= kCertMargin;
  if (certified) {
    res.p_or_y = r.value(pv);
    res.l = r.value(lv);
    res.beta = r.margin;
    res.alpha = 1.0;  // absorbed into Phi by homogeneity
    res.k = res.l * res.p_or_y.inverse();
    res.aux["phi_feas"] = r.value(ov.phi);
    Mat alphas(static_cast<Index>(ov.alphas.size()), 1);
    std::vector<double> av(ov.alphas.size());
    for (std::size_t j = 0; j < ov.alphas.size(); ++j) {
      av[j] = r.scalar(ov.alphas[j]);
      alphas(static_cast<Index>(j), 0) = av[j];
    }
    res.aux["alphas"] = alphas;
    const SymMat phi(res.aux["phi_feas"], 1e-5);
    const Mat nphi = structured_consistency(data, phi).n().mat();
    const double r1 = rel_min_eig(qstab_lmi_value(res.p_or_y, res.l, res.beta, 1.0, nphi));
    const double r2 = outer_phi_residual(sm, phi, av);
    res.residual = std::min(r1, r2);
    if (res.residual >= -1e-7) {
      res.status = SynthStatus::informative_certified;
      res.wall_time_ms = tm.ms();
      return res;
    }
    certified = false;
  }

  // Joint solve failed or returned a negative verdict; optionally lift a
  // two-step certificate through the multiplier-absorption map.
  if (opt.twostep_fallback) {
    const SynthesisResult two = synth_structured_twostep(data, model);
    if (two.certified()) {
      const double a = two.alpha;
      const SymMat phi_lift(Mat(a * two.aux.at("phi_app")), 1e-5);
      std::vector<double> al;
      const Mat& a1 = two.aux.at("stage1_alphas");
      for (Index j = 0; j < a1.rows(); ++j) al.push_back(a * a1(j, 0));
      const double r2 = outer_phi_residual(sm, phi_lift, al);
      const Mat nphi = structured_consistency(data, phi_lift).n().mat();
      const double r1 =
          rel_min_eig(qstab_lmi_value(two.p_or_y, two.l, two.beta, 1.0, nphi));
      if (std::min(r1, r2) >= -1e-7) {
        res = two;
        res.method = "structured_codesign";
        res.alpha = 1.0;
        res.residual = std::min(r1, r2);
        res.aux["phi_feas"] = phi_lift.mat();
        Mat alphas(a1.rows(), 1);
        for (Index j = 0; j < a1.rows(); ++j) alphas(j, 0) = al[static_cast<std::size_t>(j)];
        res.aux["alphas"] = alphas;
        res.aux["via_twostep_lift"] = Mat::Ones(1, 1);
        res.status = SynthStatus::informative_certified;
        res.wall_time_ms = tm.ms();
        return res;
      }
    }
  }
  if (!solver_ok) return solver_failure(std::move(res), r, tm);
  res.status = SynthStatus::not_certified;
  res.residual = r.margin;
  res.wall_time_ms = tm.ms();
  return res;
}

SynthesisResult synth_structured_twostep(const DataRecord& data,
                                         const PerturbationModel& model) {
  Timer tm;
  SynthesisResult res;
  res.method = "structured_twostep";
  const auto& sm = model.as_structured();
  const Index nd = sm.n_d, t = sm.t;
  const Plumbing pl = make_plumbing(sm);
  const Mat lm1 = pl.lm.leftCols(nd);
  const Mat lm2 = pl.lm.rightCols(t);

  const auto stage1_problem = [&](LmiProblem& p, VarRef& phi11, VarRef& phi12,
                                  std::vector<VarRef>& alphas) {
    phi11 = p.add_symmetric("Phi11", nd);
    phi12 = p.add_rectangular("Phi12", nd, t);
    const MatExpr cross = p.vmul(lm1, phi12, lm2.transpose());
    MatExpr expr = p.vmul(lm1, phi11, lm1.transpose()) + cross + transpose(cross) +
                   LmiProblem::constant(Mat(-lm2 * lm2.transpose()));
    for (std::size_t j = 0; j < sm.terms.size(); ++j) {
      const VarRef aj = p.add_scalar("alpha_" + std::to_string(j));
      alphas.push_back(aj);
      expr = expr - p.smul(pl.psi[j], aj);
      p.add_nonneg(p.v(aj));
      p.add_nonneg(LmiProblem::scalar_const(kAlphaCap) - p.v(aj));
    }
    p.add_psd(std::move(expr), true);
    p.add_nonneg(LmiProblem::scalar_const(kTraceCapBig) - p.trace_expr(phi11));
  };

  // Stage 1: smallest-trace shape with the energy normalization Phi22 = -I.
  Mat phi11_sol, phi12_sol, alphas_sol;
  {
    LmiProblem p;
    VarRef phi11, phi12;
    std::vector<VarRef> alphas;
    stage1_problem(p, phi11, phi12, alphas);
    const LmiResult probe = p.solve_max_margin();
    if (!probe.acceptable()) return solver_failure(std::move(res), probe, tm);
    if (probe.margin < 1e-9) {
      res.status = SynthStatus::not_certified;
      res.aux["stage1_infeasible"] = Mat::Ones(1, 1);
      res.wall_time_ms = tm.ms();
      return res;
    }
    p.set_objective(false, {{phi11, Mat::Identity(nd, nd)}});
    const LmiResult r = p.solve_objective();
    if (!r.acceptable(1e-5, 1e-3)) return solver_failure(std::move(res), r, tm);
    phi11_sol = r.value(phi11);
    phi12_sol = r.value(phi12);
    alphas_sol = Mat(static_cast<Index>(alphas.size()), 1);
    for (std::size_t j = 0; j < alphas.size(); ++j) {
      alphas_sol(static_cast<Index>(j), 0) = r.scalar(alphas[j]);
    }
  }
  Mat phi_app(nd + t, nd + t);
  phi_app.topLeftCorner(nd, nd) = phi11_sol;
  phi_app.topRightCorner(nd, t) = phi12_sol;
  phi_app.bottomLeftCorner(t, nd) = phi12_sol.transpose();
  phi_app.bottomRightCorner(t, t) = -Mat::Identity(t, t);
  // Numerical guard: nudge the shape block so the ellipsoid validation holds.
  {
    const SymMat sc = schur_complement(SymMat(phi_app, 1e-5), nd);
    const double lo = min_eig(sc);
    if (lo < 0) phi_app.topLeftCorner(nd, nd) += (1e-12 - lo) * Mat::Identity(nd, nd);
  }
  res.aux["phi_app"] = phi_app;
  res.aux["stage1_alphas"] = alphas_sol;

  // Stage 2: plain stabilization against the fixed outer set.
  const auto single = PerturbationModel::single(
      Mat::Identity(nd, nd), qmi::QmiSet(SymMat(phi_app, 1e-5), nd, t));
  SynthesisResult stage2 = synth_qstab(data, single);
  res.status = stage2.status;
  res.k = stage2.k;
  res.p_or_y = stage2.p_or_y;
  res.l = stage2.l;
  res.alpha = stage2.alpha;
  res.beta = stage2.beta;
  res.residual = stage2.residual;
  res.necessary_and_sufficient = false;  // two-step is sufficient only
  res.wall_time_ms = tm.ms();
  return res;
}

}  // namespace qi::informativity
