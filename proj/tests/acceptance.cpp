// Acceptance suite: end-to-end checks of the headline claims, one line per
// criterion. Exits nonzero when any criterion fails.

#include "experiments/experiments.hpp"
#include "informativity/informativity.hpp"
#include "support/json_io.hpp"
#include "verify/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace qi;
using namespace qi::informativity;
using datagen::DataRecord;
using datagen::LinearSystem;
using datagen::PerturbationModel;

namespace {

int g_failures = 0;
int g_criteria_passed = 0;

void report(int idx, const std::string& name, bool pass, double seconds,
            const std::string& detail) {
  if (pass) ++g_criteria_passed;
  std::printf("[%s] criterion %d: %s (%.1f s)%s%s\n", pass ? "PASS" : "FAIL", idx,
              name.c_str(), seconds, detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double run_timed(const std::function<bool(std::string&)>& fn, int idx,
                 const std::string& name) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = fn(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(idx, name, pass, secs, detail);
  return secs;
}

DataRecord measured(const LinearSystem& sys, const PerturbationModel& model, Index t,
                    std::uint64_t seed) {
  return datagen::perturb(datagen::gaussian_data(sys, t, derive_seed(seed, 1)),
                          datagen::sample_perturbation(model, derive_seed(seed, 2)));
}

Mat random_mat(Index r, Index c, Rng& rng) {
  Mat m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) m(i, j) = rng.gauss();
  }
  return m;
}

// Certified results accumulated by earlier criteria; criterion 6 re-verifies
// all of them.
struct CertifiedRun {
  std::string name;
  SynthesisResult res;
  std::function<int()> violations;  // criterion-specific sampled oracle
};
std::vector<CertifiedRun> g_certified;

// --- criterion 1: the 1-D stabilization scenario -------------------------
bool criterion1(std::string& detail) {
  const LinearSystem sys = experiments::scalar_1d();
  const auto model = datagen::measurement_noise_model(1, 1, 20, 0.3);
  const DataRecord meas = measured(sys, model, 20, 2024);
  const auto res = synth_qstab(meas, model);
  if (!res.certified()) {
    detail = "synthesis not certified";
    return false;
  }
  const datagen::SigmaSet sigma{meas, model};
  const auto rep = verify::verify_stabilization(sigma, res.k, 1000, 77);
  detail = "violations=" + std::to_string(rep.violations) +
           " worst_margin=" + std::to_string(rep.worst_margin);
  g_certified.push_back({"qstab(1d)", res, [sigma, k = res.k] {
                           return verify::verify_stabilization(sigma, k, 1000, 78).violations;
                         }});
  return rep.violations == 0;
}

// --- criterion 2: rank-deficient data, range-restricted controller -------
bool criterion2(std::string& detail) {
  const LinearSystem sys = experiments::rank_deficient_3x2();
  const Index t = 4;
  Rng rng(derive_seed(61, 101));
  DataRecord clean;
  clean.x = random_mat(3, t, rng);
  clean.u = Mat::Zero(2, t);
  for (Index j = 0; j < t; ++j) clean.u(0, j) = rng.gauss();
  clean.x_plus = sys.a * clean.x + sys.b * clean.u;
  const auto model = datagen::state_noise_model(3, 2, t, 0.02);
  const DataRecord meas =
      datagen::perturb(clean, datagen::sample_perturbation(model, derive_seed(61, 102)));
  const auto res = synth_qstab_stable(meas, model);
  if (!res.certified()) {
    detail = "synthesis not certified";
    return false;
  }
  const double row2 = res.k.row(1).norm();
  const Mat vminus = res.aux.at("v_minus");
  const Mat proj = Mat::Identity(2, 2) -
                   vminus * vminus.completeOrthogonalDecomposition().pseudoInverse();
  const double proj_res = (proj * res.k).norm();
  detail = "||K row2||=" + std::to_string(row2) + " proj_residual=" + std::to_string(proj_res);
  const datagen::SigmaSet sigma{meas, model};
  Mat p_cert = res.p_or_y;
  g_certified.push_back(
      {"qstab_stable(VII.B)", res, [sigma, k = res.k, p_cert] {
         return verify::verify_stabilization(sigma, k, 1000, 79, &p_cert).violations;
       }});
  return row2 <= 1e-6 && proj_res <= 1e-8;
}

// --- criterion 3: H2 performance versus data length ----------------------
bool criterion3(std::string& detail) {
  const auto outcome = experiments::run_experiment_c(io::Json::object(), "");
  const auto& s = outcome.summary;
  const bool monotone = s.at("monotone_within_std").get<bool>();
  const double ratio = s.at("gamma_ratio_last_first").get<double>();
  int feas = 0;
  for (const auto& f : s.at("feasible_counts")) feas += f.get<int>();
  detail = "ratio=" + std::to_string(ratio) + " feasible=" + std::to_string(feas) + "/50";
  return monotone && ratio < 1.0;
}

// --- criterion 4: co-design dominates the two-step baseline --------------
bool criterion4(std::string& detail) {
  const auto outcome = experiments::run_experiment_d(io::Json::object(), "");
  const auto& s = outcome.summary;
  const bool dominance = s.at("dominance").get<bool>();
  const bool gap = s.at("strict_gap").get<bool>();
  detail = "codesign_rate=" + s.at("codesign_rate").dump() +
           " twostep_rate=" + s.at("twostep_rate").dump();
  return dominance && gap;
}

// --- criterion 5: S-lemma search agrees with the brute inclusion oracle --
bool criterion5(std::string& detail) {
  Rng rng(5550);
  int disagreements = 0, found = 0, kept = 0;
  while (kept < 1000) {
    const Index r = 1 + (kept % 2);
    const Index q = 1;
    // bounded nonempty N and an M with the Theorem-2 shape
    const auto inst = [&](double inflate) {
      const Mat gm = random_mat(r, r, rng);
      const Mat m22 = -(gm * gm.transpose() + 0.05 * Mat::Identity(r, r));
      const Mat m12 = random_mat(q, r, rng) * m22;
      const Mat sm = random_mat(q, q, rng);
      Mat m(q + r, q + r);
      m.topLeftCorner(q, q) = sm * sm.transpose() +
                              m12 * pinv(SymMat(m22, 1e-6)).mat() * m12.transpose() +
                              inflate * Mat::Identity(q, q);
      m.topRightCorner(q, r) = m12;
      m.bottomLeftCorner(r, q) = m12.transpose();
      m.bottomRightCorner(r, r) = m22;
      return SymMat(m, 1e-6);
    };
    const SymMat m = inst((kept % 3 == 0) ? -0.4 * rng.u01() : 1.5 * rng.u01());
    const Mat gn = random_mat(r, r, rng);
    const Mat n22 = -(gn * gn.transpose() + 0.05 * Mat::Identity(r, r));
    const Mat n12 = random_mat(q, r, rng) * n22;
    const Mat sn = random_mat(q, q, rng);
    Mat nmat(q + r, q + r);
    nmat.topLeftCorner(q, q) = 0.5 * sn * sn.transpose() +
                               n12 * pinv(SymMat(n22, 1e-6)).mat() * n12.transpose();
    nmat.topRightCorner(q, r) = n12;
    nmat.bottomLeftCorner(r, q) = n12.transpose();
    nmat.bottomRightCorner(r, r) = n22;
    const SymMat n(nmat, 1e-6);
    const auto cert = qmi::find_slem_certificate(m, n, q);
    // knife-edge instances (certificate margin below double-precision
    // decidability) are regenerated rather than compared
    if (cert.outcome == qmi::SlemOutcome::found && cert.cert.beta < 1e-5) continue;
    ++kept;
    const bool brute = verify::brute_inclusion(n, m, q, r == 1 ? 2000 : 4000);
    const bool by_cert = cert.outcome == qmi::SlemOutcome::found;
    if (by_cert) {
      ++found;
      if (!qmi::slem_certificate_check(m, n, cert.cert, q)) ++disagreements;
    }
    if (by_cert != brute) ++disagreements;
  }
  detail = "found=" + std::to_string(found) + "/1000 disagreements=" +
           std::to_string(disagreements);
  return disagreements == 0 && found > 100 && found < 900;
}

// --- criterion 6: every certified run re-verifies ------------------------
bool criterion6(std::string& detail) {
  // add representative certified runs for the remaining syntheses
  const LinearSystem pend = experiments::pendulum();
  {
    const auto model = datagen::measurement_noise_model(3, 1, 200, 1e-3);
    const DataRecord meas = measured(pend, model, 200, 606);
    const auto h2 = synth_h2_optimal(meas, model, pend.c, pend.d);
    if (h2.certified()) {
      const datagen::SigmaSet sigma{meas, model};
      g_certified.push_back(
          {"h2opt(pendulum)", h2, [sigma, k = h2.k, c = pend.c, d = pend.d, g = h2.gamma] {
             return verify::verify_performance(sigma, k, c, d, g * (1 + 1e-9),
                                               verify::PerfKind::h2, 1000, 80)
                 .violations;
           }});
    }
  }
  {
    const LinearSystem sys = experiments::scalar_1d();
    const auto model = datagen::measurement_noise_model(1, 1, 20, 0.2);
    const DataRecord meas = measured(sys, model, 20, 607);
    const Mat c = Mat::Identity(1, 1), d = Mat::Zero(1, 1);
    const auto hinf = synth_hinf(meas, model, c, d, 8.0);
    if (hinf.certified()) {
      const datagen::SigmaSet sigma{meas, model};
      g_certified.push_back({"hinf(1d)", hinf, [sigma, k = hinf.k, c, d] {
                               return verify::verify_performance(sigma, k, c, d, 8.0,
                                                                 verify::PerfKind::hinf,
                                                                 1000, 81)
                                   .violations;
                             }});
    }
  }
  {
    datagen::ArSystem arsys;
    arsys.a_coeffs = {Mat::Constant(1, 1, 0.9)};
    arsys.b_coeffs = {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 0.2)};
    const Index t = 25;
    Mat phi = Mat::Zero(4 + t, 4 + t);
    phi.topLeftCorner(4, 4) = 0.05 * 0.05 * t * Mat::Identity(4, 4);
    phi.bottomRightCorner(t, t) = -Mat::Identity(t, t);
    const auto model = PerturbationModel::single(Mat::Identity(4, 4),
                                                 qmi::QmiSet(SymMat(phi), 4, t));
    const DataRecord meas = datagen::perturb(
        datagen::ar_gaussian_data(arsys, t, 608),
        datagen::sample_perturbation(model, 609));
    const auto ar = synth_ar(meas, model);
    if (ar.certified()) {
      const datagen::SigmaSet sigma{meas, model};
      g_certified.push_back({"ar(noisy)", ar, [sigma, k = ar.k] {
                               return verify::verify_stabilization(sigma, k, 1000, 82)
                                   .violations;
                             }});
    }
  }
  {
    const LinearSystem sys = experiments::scalar_1d();
    const auto model = datagen::structured_elementwise(3, 20, 0.15);
    const DataRecord meas = measured(sys, model, 20, 610);
    const auto co = synth_structured_codesign(meas, model);
    if (co.certified()) {
      const SymMat phi(co.aux.at("phi_feas"), 1e-5);
      const auto nset = structured_consistency(meas, phi);
      g_certified.push_back({"codesign(1d)", co, [nset, k = co.k] {
                               return verify::verify_stabilization_set(nset, k, 1000, 83)
                                   .violations;
                             }});
    }
  }
  if (g_certified.size() < 6) {
    detail = "only " + std::to_string(g_certified.size()) + " certified runs collected";
    return false;
  }
  bool ok = true;
  int total_violations = 0;
  for (const auto& run : g_certified) {
    const int v = run.violations();
    total_violations += v;
    const bool pass = run.res.residual >= -1e-7 && v == 0;
    if (!pass) {
      ok = false;
      detail += run.name + "(resid=" + std::to_string(run.res.residual) +
                ",viol=" + std::to_string(v) + ") ";
    }
  }
  detail = "runs=" + std::to_string(g_certified.size()) +
           " violations=" + std::to_string(total_violations) + " " + detail;
  return ok;
}

// --- criterion 7: algebraic identity suites -------------------------------
bool criterion7(std::string& detail) {
  Rng rng(7770);
  double worst = 0.0;
  // Penrose conditions
  for (int i = 0; i < 1000; ++i) {
    const Index n = 2 + (i % 4);
    const Mat g = random_mat(n, 1 + (i % n), rng);
    const SymMat a(g * g.transpose() * ((i % 2) ? 1.0 : -1.0), 1e-6);
    const Mat ap = pinv(a).mat();
    const double s = tol_scale(a.mat());
    worst = std::max(worst, (a.mat() * ap * a.mat() - a.mat()).norm() / s);
    worst = std::max(worst, (ap * a.mat() * ap - ap).norm() / tol_scale(ap));
    worst = std::max(worst, (a.mat() * ap - (a.mat() * ap).transpose()).norm() / s);
  }
  // decomposition identity and ellipsoid expansion
  for (int i = 0; i < 1000; ++i) {
    const Index q = 1 + (i % 2), r = 1 + (i % 3);
    const Mat gr = random_mat(r, (i % r) + 1, rng);
    const Mat n22 = -gr * gr.transpose();
    const Mat n12 = random_mat(q, r, rng) * n22;
    const Mat sq = random_mat(q, q, rng);
    Mat nmat(q + r, q + r);
    nmat.topLeftCorner(q, q) =
        sq * sq.transpose() + n12 * pinv(SymMat(n22, 1e-6)).mat() * n12.transpose();
    nmat.topRightCorner(q, r) = n12;
    nmat.bottomLeftCorner(r, q) = n12.transpose();
    nmat.bottomRightCorner(r, r) = n22;
    const SymMat n(nmat, 1e-6);
    const double s = tol_scale(nmat);
    // reassembly through the triangular factorization
    Mat tmat = Mat::Identity(q + r, q + r);
    tmat.topRightCorner(q, r) = n12 * pinv(SymMat(n22, 1e-6)).mat();
    Mat mid = Mat::Zero(q + r, q + r);
    mid.topLeftCorner(q, q) = schur_complement(n, q).mat();
    mid.bottomRightCorner(r, r) = n22;
    worst = std::max(worst, (tmat * mid * tmat.transpose() - nmat).norm() / s);
    // quadratic expansion against the ellipsoid form
    const qmi::QmiSet set(n, q, r);
    const auto form = qmi::is_matrix_ellipsoid(set);
    if (form) {
      const Mat z = random_mat(r, q, rng);
      const Mat dz = z - form->center;
      const Mat rhs = form->q_mat.mat() * form->q_mat.mat() -
                      dz.transpose() * form->r_mat.mat() * form->r_mat.mat() * dz;
      worst = std::max(worst,
                       (set.evaluate(z).mat() - rhs).norm() / (s * tol_scale(z)));
    }
  }
  // Schur pre/post equivalence of the synthesis LMIs at random points
  for (int i = 0; i < 1000; ++i) {
    const Index n = 1 + (i % 2), m = 1;
    const Mat gp = random_mat(n, n, rng);
    const Mat p = gp * gp.transpose() + 0.2 * Mat::Identity(n, n);
    const Mat l = random_mat(m, n, rng);
    const double alpha = rng.u01(), beta = 0.2 * rng.u01();
    const Mat gn = random_mat(2 * n + m, 2 * n + m, rng);
    const Mat nmat = 0.5 * (gn + gn.transpose());
    Mat big = Mat::Zero(3 * n + m, 3 * n + m);
    big.topLeftCorner(n, n) = p - beta * Mat::Identity(n, n);
    big.block(n, n, n, n) = -p;
    big.block(n, 2 * n, n, m) = -l.transpose();
    big.block(2 * n, n, m, n) = -l;
    big.block(2 * n, 2 * n + m, m, n) = l;
    big.block(2 * n + m, 2 * n, n, m) = l.transpose();
    big.bottomRightCorner(n, n) = p;
    big.topLeftCorner(2 * n + m, 2 * n + m) -= alpha * nmat;
    const Mat post = schur_complement(SymMat(big, 1e-6), 2 * n + m).mat();
    Mat ik(n + m, n);
    ik.topRows(n) = Mat::Identity(n, n);
    ik.bottomRows(m) = l * p.inverse();
    Mat pre = Mat::Zero(2 * n + m, 2 * n + m);
    pre.topLeftCorner(n, n) = p - beta * Mat::Identity(n, n);
    pre.bottomRightCorner(n + m, n + m) = -ik * p * ik.transpose();
    pre -= alpha * nmat;
    worst = std::max(worst, (post - pre).norm() / tol_scale(pre));
  }
  detail = "worst_residual=" + std::to_string(worst);
  return worst <= 1e-7;
}

// --- criterion 8: multiplier-absorption rescaling ------------------------
bool criterion8(std::string& detail) {
  const LinearSystem sys = experiments::scalar_1d();
  Rng rng(8880);
  int certified = 0, checked = 0, mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    const Index t = 4 + (i % 3);
    const double eps = 0.02 + 0.13 * rng.u01();
    const auto model = datagen::structured_elementwise(3, t, eps);
    const DataRecord meas = measured(sys, model, t, 8000 + i);
    CodesignOptions opt;
    opt.twostep_fallback = false;
    const auto co = synth_structured_codesign(meas, model, opt);
    if (co.status == SynthStatus::solver_error) continue;
    ++checked;
    if (!co.certified()) continue;
    ++certified;
    const Mat phi = co.aux.at("phi_feas");
    const Mat alphas = co.aux.at("alphas");
    for (double s : {0.3, 3.0}) {
      // normalized certificate -> fixed-multiplier certificate (alpha = s)
      std::vector<double> al;
      for (Index j = 0; j < alphas.rows(); ++j) al.push_back(alphas(j, 0) / s);
      const SymMat phi_s(Mat(phi / s), 1e-5);
      if (outer_phi_residual(model.as_structured(), phi_s, al) < -1e-7) ++mismatches;
      const auto nset = structured_consistency(meas, phi_s);
      Mat big = Mat::Zero(4, 4);
      const Mat p = co.p_or_y, l = co.l;
      big.topLeftCorner(1, 1) = p - co.beta * Mat::Identity(1, 1);
      big.block(1, 1, 1, 1) = -p;
      big.block(1, 2, 1, 1) = -l.transpose();
      big.block(2, 1, 1, 1) = -l;
      big.block(2, 3, 1, 1) = l;
      big.block(3, 2, 1, 1) = l.transpose();
      big.bottomRightCorner(1, 1) = p;
      big.topLeftCorner(3, 3) -= s * nset.n().mat();
      if (min_eig(SymMat(big, 1e-5)) < -1e-7 * tol_scale(big)) ++mismatches;
    }
  }
  detail = "instances=" + std::to_string(checked) + " certified=" + std::to_string(certified) +
           " mismatches=" + std::to_string(mismatches);
  return checked >= 95 && certified >= 20 && mismatches == 0;
}

}  // namespace

int main() {
  std::printf("qmi-info acceptance suite\n");
  const double t1 = run_timed(criterion1, 1, "1-D stabilization, 1000-sample verification");
  const double t2 = run_timed(criterion2, 2, "rank-deficient data, zero row and range of K");
  const double t3 = run_timed(criterion3, 3, "H2 performance trend over data length");
  const double t4 = run_timed(criterion4, 4, "co-design dominance over the two-step baseline");
  run_timed(criterion5, 5, "S-lemma search vs brute inclusion, 1000 instances");
  run_timed(criterion6, 6, "certificate soundness across certified runs");
  run_timed(criterion7, 7, "pseudo-inverse / decomposition / Schur identities");
  run_timed(criterion8, 8, "multiplier absorption rescaling, 100 instances");

  bool budget_ok = true;
  const auto budget = [&](int idx, double secs, double limit) {
    if (secs > limit) {
      std::printf("[FAIL] runtime budget: criterion %d took %.1f s (limit %.0f s)\n", idx,
                  secs, limit);
      budget_ok = false;
    }
  };
  budget(1, t1, 10.0);
  budget(2, t2, 5.0);
  budget(3, t3, 300.0);
  budget(4, t4, 900.0);
  if (!budget_ok) ++g_failures;

  std::printf("%d of 8 criteria passed\n", g_criteria_passed);
  if (g_failures > 0) {
    std::printf("ACCEPTANCE: FAIL (%d failure(s))\n", g_failures);
    return 1;
  }
  std::printf("ACCEPTANCE: PASS\n");
  return 0;
}
