#include "datagen/datagen.hpp"

#include <algorithm>
#include <cmath>

namespace qi::datagen {

Mat ArSystem::coeff_a() const {
  const Index pp = p(), mm = m(), l = order();
  Mat a(pp, (pp + mm) * l);
  for (Index i = 0; i < l; ++i) a.block(0, i * pp, pp, pp) = a_coeffs[i];
  for (Index i = 0; i < l; ++i) a.block(0, l * pp + i * mm, pp, mm) = b_coeffs[i + 1];
  return a;
}

Mat ar_j1(Index p, Index m, Index order) {
  const Index rows = (p + m) * order - p;
  const Index cols = (p + m) * order;
  Mat j1 = Mat::Zero(rows, cols);
  if (order > 1) {
    j1.block(0, 0, p * (order - 1), p * (order - 1)) =
        Mat::Identity(p * (order - 1), p * (order - 1));
    j1.block(p * (order - 1) + m, p * order, m * (order - 1), m * (order - 1)) =
        Mat::Identity(m * (order - 1), m * (order - 1));
  }
  return j1;
}

Mat ar_j2(Index p, Index m, Index order) {
  const Index rows = (p + m) * order - p;
  Mat j2 = Mat::Zero(rows, m);
  j2.block(p * (order - 1), 0, m, m) = Mat::Identity(m, m);
  return j2;
}

Mat ar_lifted_closed_loop(const Mat& a, const Mat& b, const Mat& k, Index p, Index m,
                          Index order) {
  const Index dim = (p + m) * order;
  Mat acl(dim, dim);
  acl.topRows(p) = a + b * k;
  acl.bottomRows(dim - p) = ar_j1(p, m, order) + ar_j2(p, m, order) * k;
  return acl;
}

Mat DataRecord::stacked() const {
  Mat s(q() + r(), t());
  s.topRows(q()) = x_plus;
  s.middleRows(q(), x.rows()) = -x;
  s.bottomRows(u.rows()) = -u;
  return s;
}

PerturbationModel PerturbationModel::single(Mat e, qmi::QmiSet phi_hat) {
  if (e.cols() != phi_hat.q()) throw MatError("PerturbationModel: E cols must match n_hat");
  if (!qmi::is_matrix_ellipsoid(phi_hat)) {
    throw MatError("PerturbationModel: phi_hat is not a matrix ellipsoid");
  }
  return PerturbationModel(SingleModel{std::move(e), std::move(phi_hat)});
}

PerturbationModel PerturbationModel::structured(std::vector<StructuredTerm> terms,
                                                Index n_d, Index t) {
  for (const auto& term : terms) {
    if (term.e_j.rows() != n_d || term.f_j.cols() != t ||
        term.e_j.cols() != term.phi_j.q() || term.f_j.rows() != term.phi_j.r()) {
      throw MatError("PerturbationModel: structured term dimensions inconsistent");
    }
    if (!qmi::is_matrix_ellipsoid(term.phi_j)) {
      throw MatError("PerturbationModel: phi_j is not a matrix ellipsoid");
    }
  }
  return PerturbationModel(StructuredModel{std::move(terms), n_d, t});
}

Index PerturbationModel::rows() const {
  if (is_single()) return as_single().e.rows();
  return as_structured().n_d;
}

Index PerturbationModel::t() const {
  if (is_single()) return as_single().phi_hat.r();
  return as_structured().t;
}

namespace {

qmi::QmiSet energy_phi(Index rows, Index t, double radius2) {
  Mat phi = Mat::Zero(rows + t, rows + t);
  phi.topLeftCorner(rows, rows) = radius2 * Mat::Identity(rows, rows);
  phi.bottomRightCorner(t, t) = -Mat::Identity(t, t);
  return qmi::QmiSet(SymMat(phi), rows, t);
}

}  // namespace

PerturbationModel measurement_noise_model(Index n, Index m, Index t, double eps) {
  const Index rows = 2 * n + m;
  return PerturbationModel::single(Mat::Identity(rows, rows),
                                   energy_phi(rows, t, eps * eps * static_cast<double>(t)));
}

PerturbationModel disturbance_model(Index n, Index m, Index t, const SymMat& theta) {
  Mat e = Mat::Zero(2 * n + m, n);
  e.topRows(n) = Mat::Identity(n, n);
  Mat phi = Mat::Zero(n + t, n + t);
  phi.topLeftCorner(n, n) = theta.mat();
  phi.bottomRightCorner(t, t) = -Mat::Identity(t, t);
  return PerturbationModel::single(std::move(e), qmi::QmiSet(SymMat(phi), n, t));
}

PerturbationModel state_noise_model(Index n, Index m, Index t, double eps) {
  Mat e = Mat::Zero(2 * n + m, 2 * n);
  e.topRows(2 * n) = Mat::Identity(2 * n, 2 * n);
  return PerturbationModel::single(
      std::move(e), energy_phi(2 * n, t, eps * eps * static_cast<double>(t)));
}

PerturbationModel structured_disturbance_measurement(Index n, Index m, Index t,
                                                     double eps_d, double eps_m) {
  const Index nd = 2 * n + m;
  Mat ed = Mat::Zero(nd, n);
  ed.topRows(n) = Mat::Identity(n, n);
  std::vector<StructuredTerm> terms;
  terms.push_back({std::move(ed), Mat::Identity(t, t),
                   energy_phi(n, t, eps_d * eps_d * static_cast<double>(t))});
  terms.push_back({Mat::Identity(nd, nd), Mat::Identity(t, t),
                   energy_phi(nd, t, eps_m * eps_m * static_cast<double>(t))});
  return PerturbationModel::structured(std::move(terms), nd, t);
}

PerturbationModel structured_hankel(Index p, Index t, Index order, double eps) {
  const Index nd = p * order;
  const Index band = t + order - 1;
  std::vector<StructuredTerm> terms;
  for (Index l = 0; l < order; ++l) {
    Mat e = Mat::Zero(nd, p);
    e.block(l * p, 0, p, p) = Mat::Identity(p, p);
    Mat f = Mat::Zero(band, t);
    f.block(l, 0, t, t) = Mat::Identity(t, t);
    terms.push_back({std::move(e), std::move(f),
                     energy_phi(p, band, eps * eps * static_cast<double>(band))});
  }
  return PerturbationModel::structured(std::move(terms), nd, t);
}

PerturbationModel structured_instantaneous(const Mat& e, Index t, double eps) {
  std::vector<StructuredTerm> terms;
  for (Index step = 0; step < t; ++step) {
    Mat f = Mat::Zero(1, t);
    f(0, step) = 1.0;
    terms.push_back({e, std::move(f), energy_phi(e.cols(), 1, eps * eps)});
  }
  return PerturbationModel::structured(std::move(terms), e.rows(), t);
}

PerturbationModel structured_elementwise(Index n_d, Index t, double eps) {
  std::vector<StructuredTerm> terms;
  terms.reserve(static_cast<std::size_t>(n_d * t));
  for (Index i = 0; i < n_d; ++i) {
    for (Index j = 0; j < t; ++j) {
      Mat e = Mat::Zero(n_d, 1);
      e(i, 0) = 1.0;
      Mat f = Mat::Zero(1, t);
      f(0, j) = 1.0;
      terms.push_back({std::move(e), std::move(f), energy_phi(1, 1, eps * eps)});
    }
  }
  return PerturbationModel::structured(std::move(terms), n_d, t);
}

DataRecord simulate(const LinearSystem& sys, const Vec& x0, const Mat& u_seq) {
  const Index n = sys.n(), t = u_seq.cols();
  if (x0.size() != n || u_seq.rows() != sys.m()) throw MatError("simulate: dimension mismatch");
  DataRecord d;
  d.x = Mat(n, t);
  d.x_plus = Mat(n, t);
  d.u = u_seq;
  Vec xk = x0;
  for (Index k = 0; k < t; ++k) {
    d.x.col(k) = xk;
    xk = sys.a * xk + sys.b * u_seq.col(k);
    d.x_plus.col(k) = xk;
  }
  return d;
}

DataRecord simulate_random(const LinearSystem& sys, const Vec& x0, Index t,
                           std::uint64_t seed) {
  Rng rng(seed);
  Mat u(sys.m(), t);
  for (Index i = 0; i < u.rows(); ++i) {
    for (Index j = 0; j < t; ++j) u(i, j) = rng.gauss();
  }
  return simulate(sys, x0, u);
}

DataRecord gaussian_data(const LinearSystem& sys, Index t, std::uint64_t seed) {
  Rng rng(seed);
  DataRecord d;
  d.x = Mat(sys.n(), t);
  d.u = Mat(sys.m(), t);
  for (Index i = 0; i < d.x.rows(); ++i) {
    for (Index j = 0; j < t; ++j) d.x(i, j) = rng.gauss();
  }
  for (Index i = 0; i < d.u.rows(); ++i) {
    for (Index j = 0; j < t; ++j) d.u(i, j) = rng.gauss();
  }
  d.x_plus = sys.a * d.x + sys.b * d.u;
  return d;
}

DataRecord ar_gaussian_data(const ArSystem& sys, Index t, std::uint64_t seed) {
  Rng rng(seed);
  const Index p = sys.p(), m = sys.m(), l = sys.order();
  DataRecord d;
  d.kind = DataKind::autoregressive;
  d.ar_order = l;
  d.x_plus = Mat(p, t);
  d.x = Mat((p + m) * l, t);
  d.u = Mat(m, t);
  std::vector<Vec> yh(l, Vec::Zero(p)), uh(l, Vec::Zero(m));  // y(t-1)..y(t-L)
  for (Index k = 0; k < t; ++k) {
    Vec uk(m);
    for (Index i = 0; i < m; ++i) uk[i] = rng.gauss();
    Vec yk = sys.b_coeffs[0] * uk;
    for (Index i = 0; i < l; ++i) yk += sys.a_coeffs[i] * yh[i] + sys.b_coeffs[i + 1] * uh[i];
    for (Index i = 0; i < l; ++i) {
      d.x.block(i * p, k, p, 1) = yh[i];
      d.x.block(l * p + i * m, k, m, 1) = uh[i];
    }
    d.u.col(k) = uk;
    d.x_plus.col(k) = yk;
    for (Index i = l - 1; i > 0; --i) {
      yh[i] = yh[i - 1];
      uh[i] = uh[i - 1];
    }
    yh[0] = yk;
    uh[0] = uk;
  }
  return d;
}

DataRecord perturb(const DataRecord& clean, const Mat& delta) {
  if (delta.rows() != clean.q() + clean.r() || delta.cols() != clean.t()) {
    throw MatError("perturb: delta has wrong shape");
  }
  DataRecord d = clean;
  d.x_plus += delta.topRows(clean.q());
  d.x -= delta.middleRows(clean.q(), clean.x.rows());
  d.u -= delta.bottomRows(clean.u.rows());
  return d;
}

PerturbationSampler::PerturbationSampler(const PerturbationModel& model, std::uint64_t seed,
                                         int burn_in, int thin)
    : model_(model), rng_(seed), thin_(thin) {
  const auto setup = [&](const qmi::QmiSet& set) {
    const auto form = qmi::is_matrix_ellipsoid(set);
    if (!form) throw MatError("PerturbationSampler: model QMI is not a matrix ellipsoid");
    Chain c;
    c.set = &set;
    c.m1 = Mat::Zero(set.q(), set.r());
    c.center = -set.n12() * pinv(set.n22()).mat();
    c.q_mat = form->q_mat.mat();
    c.rinv = psd_pinv_sqrt(SymMat(-set.n22().mat(), 1e-6)).mat();
    chains_.push_back(std::move(c));
  };
  if (model.is_single()) {
    setup(model.as_single().phi_hat);
  } else {
    for (const auto& term : model.as_structured().terms) setup(term.phi_j);
  }
  for (auto& c : chains_) advance(c, burn_in);
}

void PerturbationSampler::advance(Chain& chain, int steps) {
  const Index q = chain.m1.rows(), r = chain.m1.cols();
  for (int s = 0; s < steps; ++s) {
    Mat prop = chain.m1;
    for (Index i = 0; i < q; ++i) {
      for (Index j = 0; j < r; ++j) prop(i, j) += chain.step * rng_.gauss();
    }
    if (op_norm(prop) <= 1.0) chain.m1 = prop;
  }
}

Mat PerturbationSampler::emit_single() {
  auto& c = chains_[0];
  Mat dhat = c.center + c.q_mat * c.m1 * c.rinv;
  for (int guard = 0; guard < 8 && !qmi::contains(*c.set, dhat.transpose(), false, 1e-9);
       ++guard) {
    c.m1 *= 1.0 - 1e-9;
    dhat = c.center + c.q_mat * c.m1 * c.rinv;
  }
  if (!qmi::contains(*c.set, dhat.transpose(), false, 1e-9)) {
    throw MatError("PerturbationSampler: emitted point failed the membership re-check");
  }
  return model_.as_single().e * dhat;
}

Mat PerturbationSampler::emit_structured() {
  const auto& sm = model_.as_structured();
  Mat delta = Mat::Zero(sm.n_d, sm.t);
  for (std::size_t j = 0; j < sm.terms.size(); ++j) {
    auto& c = chains_[j];
    Mat dhat = c.center + c.q_mat * c.m1 * c.rinv;
    for (int guard = 0; guard < 8 && !qmi::contains(*c.set, dhat.transpose(), false, 1e-9);
         ++guard) {
      c.m1 *= 1.0 - 1e-9;
      dhat = c.center + c.q_mat * c.m1 * c.rinv;
    }
    if (!qmi::contains(*c.set, dhat.transpose(), false, 1e-9)) {
      throw MatError("PerturbationSampler: emitted point failed the membership re-check");
    }
    delta += sm.terms[j].e_j * dhat * sm.terms[j].f_j;
  }
  return delta;
}

Mat PerturbationSampler::next() {
  for (auto& c : chains_) advance(c, thin_);
  return model_.is_single() ? emit_single() : emit_structured();
}

Mat sample_perturbation(const PerturbationModel& model, std::uint64_t seed, int burn_in,
                        int thin) {
  PerturbationSampler s(model, seed, burn_in, thin);
  return s.next();
}

namespace {

// Precomputed machinery for repeated Sigma membership tests.
struct SigmaTester {
  Mat bx;       // stacked data
  Mat e;
  Mat center;   // E * Dhat_c
  Mat q_mat;
  Mat r_mat;    // (-phi22)^(1/2)
  Mat r2;       // -phi22
  Mat proj1;    // I - phi22 phi22^+
  bool has_kernel = false;
  Index q = 0;

  explicit SigmaTester(const SigmaSet& sigma) {
    if (!sigma.model.is_single()) {
      throw MatError("sigma_contains: only single-QMI models are decidable here");
    }
    const auto& sm = sigma.model.as_single();
    const auto form = qmi::is_matrix_ellipsoid(sm.phi_hat);
    if (!form) throw MatError("sigma_contains: phi_hat is not a matrix ellipsoid");
    bx = sigma.data.stacked();
    e = sm.e;
    q = sigma.data.q();
    const SymMat phi22 = sm.phi_hat.n22();
    const Mat pinv22 = pinv(phi22).mat();
    center = e * (-sm.phi_hat.n12() * pinv22);
    q_mat = form->q_mat.mat();
    r_mat = form->r_mat.mat();
    r2 = -phi22.mat();
    proj1 = Mat::Identity(phi22.dim(), phi22.dim()) - phi22.mat() * pinv22;
    has_kernel = proj1.norm() > 1e-9 * static_cast<double>(phi22.dim());
  }

  bool contains(const Mat& a, const Mat& b, double tol) const {
    Mat s(q, bx.rows());
    s.leftCols(q) = Mat::Identity(q, q);
    s.middleCols(q, a.cols()) = a;
    s.rightCols(b.cols()) = b;
    // kernel part: im S bX (I - phi22 phi22^+) within im S E
    if (has_kernel) {
      const Mat lhs = s * bx * proj1;
      if (lhs.norm() > tol) {
        const Mat se = s * e;
        const Mat sepinv = se.completeOrthogonalDecomposition().pseudoInverse();
        const Mat resid = lhs - se * (sepinv * lhs);
        if (resid.norm() > tol * tol_scale(lhs)) return false;
      }
    }
    // ball part: minimum-norm M1 with S(bX - E Dhat_c) R^2 = S E Q M1 R
    const Mat g = s * e * q_mat;
    const Mat h2 = s * (bx - center) * r2;
    const Mat gpinv = g.completeOrthogonalDecomposition().pseudoInverse();
    const Mat m1 = gpinv * (s * (bx - center) * r_mat);
    if ((g * m1 * r_mat - h2).norm() > tol * tol_scale(h2)) return false;
    return op_norm(m1) <= 1.0 + tol;
  }
};

}  // namespace

bool sigma_contains(const SigmaSet& sigma, const Mat& a, const Mat& b, double tol) {
  return SigmaTester(sigma).contains(a, b, tol);
}

std::vector<std::pair<Mat, Mat>> sample_sigma(const SigmaSet& sigma, int count,
                                              std::uint64_t seed) {
  const SigmaTester tester(sigma);
  PerturbationSampler sampler(sigma.model, derive_seed(seed, 1));
  const Index q = sigma.data.q();
  const Index rx = sigma.data.x.rows(), ru = sigma.data.u.rows();

  const Mat bxdata = sigma.data.stacked();
  const qmi::QmiSet nset = [&] {
    const auto& sm = sigma.model.as_single();
    Mat ex(bxdata.rows(), sm.e.cols() + bxdata.cols());
    ex.leftCols(sm.e.cols()) = sm.e;
    ex.rightCols(bxdata.cols()) = bxdata;
    return qmi::QmiSet(SymMat(ex * sm.phi_hat.n().mat() * ex.transpose(), 1e-6), q,
                       bxdata.rows() - q);
  }();
  const auto form = qmi::is_matrix_ellipsoid(nset);

  std::vector<std::pair<Mat, Mat>> out;
  out.reserve(static_cast<std::size_t>(count));
  int attempts = 0;
  int idx = 0;
  while (static_cast<int>(out.size()) < count && attempts < 40 * count + 100) {
    ++attempts;
    Mat ab;
    if (idx % 2 == 0 || !form) {
      const Mat delta = sampler.next();
      const Mat cleaned = bxdata - delta;
      const Mat regress = -cleaned.bottomRows(rx + ru);
      ab = cleaned.topRows(q) * regress.completeOrthogonalDecomposition().pseudoInverse();
    } else {
      const Mat z = qmi::sample_member(nset, *form, derive_seed(seed, 2, idx), idx % 8 == 3);
      ab = z.transpose();
    }
    ++idx;
    const Mat a = ab.leftCols(rx);
    const Mat b = ab.rightCols(ru);
    if (tester.contains(a, b, 1e-6)) out.emplace_back(a, b);
  }
  if (static_cast<int>(out.size()) < count) {
    throw MatError("sample_sigma: could not collect the requested number of members");
  }
  return out;
}

}  // namespace qi::datagen
