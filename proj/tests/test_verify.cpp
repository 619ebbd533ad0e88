#include "verify/verify.hpp"

#include "experiments/experiments.hpp"
#include "informativity/informativity.hpp"
#include "support/rng.hpp"

#include "doctest.h"

using namespace qi;
using namespace qi::verify;
using datagen::DataRecord;
using datagen::LinearSystem;

namespace {

Mat random_stable(Index n, Rng& rng) {
  Mat a(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) a(i, j) = rng.gauss();
  }
  return a * (0.85 / std::max(spectral_radius(a), 1e-9));
}

// Ellipsoid-shaped Theorem-2 instance pair with known preconditions; used by
// the oracle-agreement tests.
struct SlemInstance {
  SymMat m;
  SymMat n;
  Index q;
};

SlemInstance random_slem_instance(Index q, Index r, Rng& rng) {
  const auto rand_mat = [&](Index a, Index b) {
    Mat g(a, b);
    for (Index i = 0; i < a; ++i) {
      for (Index j = 0; j < b; ++j) g(i, j) = rng.gauss();
    }
    return g;
  };
  // M in Pi-like shape with M22 < 0 and ker M22 in ker M12 by construction
  const Mat gm = rand_mat(r, r);
  const Mat m22 = -(gm * gm.transpose() + 0.05 * Mat::Identity(r, r));
  const Mat m12 = rand_mat(q, r) * m22;
  const Mat sm = rand_mat(q, q);
  const Mat m11 = sm * sm.transpose() + m12 * pinv(SymMat(m22, 1e-6)).mat() * m12.transpose();
  Mat m(q + r, q + r);
  m.topLeftCorner(q, q) = m11;
  m.topRightCorner(q, r) = m12;
  m.bottomLeftCorner(r, q) = m12.transpose();
  m.bottomRightCorner(r, r) = m22;
  // N: bounded random ellipsoid, nonempty by construction
  const Mat gn = rand_mat(r, r);
  const Mat n22 = -(gn * gn.transpose() + 0.05 * Mat::Identity(r, r));
  const Mat n12 = rand_mat(q, r) * n22;
  const Mat sn = rand_mat(q, q);
  const Mat n11 =
      0.5 * sn * sn.transpose() + n12 * pinv(SymMat(n22, 1e-6)).mat() * n12.transpose();
  Mat n(q + r, q + r);
  n.topLeftCorner(q, q) = n11;
  n.topRightCorner(q, r) = n12;
  n.bottomLeftCorner(r, q) = n12.transpose();
  n.bottomRightCorner(r, r) = n22;
  return {SymMat(m, 1e-6), SymMat(n, 1e-6), q};
}

}  // namespace

TEST_CASE("spectral_radius basics") {
  Mat a(2, 2);
  a << 0.0, 1.0, -0.25, 0.0;
  CHECK(spectral_radius(a) == doctest::Approx(0.5));
  CHECK(spectral_radius(Mat::Identity(3, 3)) == doctest::Approx(1.0));
}

TEST_CASE("two independent H2 oracles agree") {
  Rng rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat a = random_stable(3, rng);
    Mat c(2, 3);
    for (Index i = 0; i < 2; ++i) {
      for (Index j = 0; j < 3; ++j) c(i, j) = rng.gauss();
    }
    const double g1 = h2_norm_gramian(a, c);
    const double g2 = h2_norm_impulse(a, c);
    CHECK(g1 == doctest::Approx(g2).epsilon(1e-6));
  }
}

TEST_CASE("hinf oracle: scalar lag has closed-form norm") {
  const Mat a = Mat::Constant(1, 1, 0.5);
  const Mat c = Mat::Identity(1, 1);
  // |1/(e^{i0} - 0.5)| = 2
  CHECK(hinf_norm(a, c) == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(bounded_real_feasible(a, c, 2.1));
  CHECK_FALSE(bounded_real_feasible(a, c, 1.9));
}

TEST_CASE("hinf upper-bounds the frequency response on random systems") {
  Rng rng(82);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat a = random_stable(3, rng);
    Mat c(1, 3);
    for (Index j = 0; j < 3; ++j) c(0, j) = rng.gauss();
    const double norm = hinf_norm(a, c);
    for (int k = 0; k < 32; ++k) {
      const double th = 2.0 * M_PI * k / 32.0;
      const std::complex<double> z(std::cos(th), std::sin(th));
      Eigen::MatrixXcd zi =
          z * Eigen::MatrixXcd::Identity(3, 3) - a.cast<std::complex<double>>();
      const Eigen::MatrixXcd g =
          c.cast<std::complex<double>>() *
          zi.partialPivLu().solve(Eigen::MatrixXcd::Identity(3, 3));
      CHECK(g.jacobiSvd().singularValues()[0] <= norm * (1.0 + 1e-5));
    }
  }
}

TEST_CASE("verify_stabilization: zero gain on an unstable-only set violates everywhere") {
  LinearSystem sys{Mat::Constant(1, 1, 1.5), Mat::Constant(1, 1, 0.3), {}, {}};
  const auto model = datagen::measurement_noise_model(1, 1, 25, 0.05);
  const DataRecord meas = datagen::perturb(datagen::gaussian_data(sys, 25, 83),
                                           datagen::sample_perturbation(model, 84));
  const auto rep = verify_stabilization({meas, model}, Mat::Zero(1, 1), 100, 85);
  CHECK(rep.n_samples == 100);
  CHECK(rep.violations == 100);
  CHECK(rep.worst_margin < 0.0);
}

TEST_CASE("verify_stabilization: certified P passes the per-sample Lyapunov check") {
  LinearSystem sys = experiments::scalar_1d();
  const auto model = datagen::measurement_noise_model(1, 1, 20, 0.25);
  const DataRecord meas = datagen::perturb(datagen::gaussian_data(sys, 20, 86),
                                           datagen::sample_perturbation(model, 87));
  const auto res = informativity::synth_qstab(meas, model);
  REQUIRE(res.certified());
  const auto rep = verify_stabilization({meas, model}, res.k, 150, 88, &res.p_or_y);
  CHECK(rep.violations == 0);
}

TEST_CASE("verify_performance: halved gamma produces violations") {
  LinearSystem sys = experiments::scalar_1d();
  const auto model = datagen::measurement_noise_model(1, 1, 20, 0.2);
  const DataRecord meas = datagen::perturb(datagen::gaussian_data(sys, 20, 89),
                                           datagen::sample_perturbation(model, 90));
  const Mat c = Mat::Identity(1, 1), d = Mat::Zero(1, 1);
  const auto res = informativity::synth_h2_optimal(meas, model, c, d);
  REQUIRE(res.certified());
  const auto good = verify_performance({meas, model}, res.k, c, d, res.gamma * 1.0001,
                                       verify::PerfKind::h2, 60, 91);
  CHECK(good.violations == 0);
  const auto bad = verify_performance({meas, model}, res.k, c, d, res.gamma * 0.5,
                                      verify::PerfKind::h2, 60, 91);
  CHECK(bad.violations > 0);
}

TEST_CASE("brute_inclusion: nested and crossing intervals") {
  Vec n(2), wide(2), narrow(2);
  n << 1, -1;        // [-1, 1]
  wide << 4, -1;     // [-2, 2]
  narrow << 0.25, -1;  // [-1/2, 1/2]
  CHECK(brute_inclusion(SymMat::Diag(n), SymMat::Diag(wide), 1, 400));
  CHECK_FALSE(brute_inclusion(SymMat::Diag(n), SymMat::Diag(narrow), 1, 400));
}

TEST_CASE("slem certificate and brute oracle agree on random small instances") {
  Rng rng(92);
  int found = 0, not_found = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const Index r = 1 + (trial % 2);
    SlemInstance inst = random_slem_instance(1, r, rng);
    // randomly inflate or deflate M's q-block to get both verdicts
    Mat m = inst.m.mat();
    m(0, 0) += (trial % 3 == 0 ? -0.5 : 2.0) * rng.u01();
    inst.m = SymMat(m, 1e-6);
    const auto cert = qmi::find_slem_certificate(inst.m, inst.n, inst.q);
    const bool brute = brute_inclusion(inst.n, inst.m, inst.q, r == 1 ? 2000 : 4000);
    // skip knife-edge instances that no double-precision oracle can decide
    if (cert.outcome == qmi::SlemOutcome::found && cert.cert.beta < 1e-5) continue;
    if (cert.outcome == qmi::SlemOutcome::found) {
      CHECK(brute);
      CHECK(qmi::slem_certificate_check(inst.m, inst.n, cert.cert, inst.q));
      ++found;
    } else {
      CHECK_FALSE(brute);
      ++not_found;
    }
  }
  CHECK(found > 10);
  CHECK(not_found > 10);
}
