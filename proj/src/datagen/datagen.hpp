#pragma once

#include "qmi/qmi.hpp"
#include "support/rng.hpp"

#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

namespace qi::datagen {

// x+ = A x + B u, performance output z = C x + D u (C, D optional).
struct LinearSystem {
  Mat a;
  Mat b;
  Mat c;  // may be 0x0
  Mat d;  // may be 0x0

  Index n() const { return a.rows(); }
  Index m() const { return b.cols(); }
  Index p() const { return c.rows(); }
};

// y(t) = sum_{l=1..L} A_l y(t-l) + sum_{l=0..L} B_l u(t-l).
struct ArSystem {
  std::vector<Mat> a_coeffs;  // A_1..A_L, each p x p
  std::vector<Mat> b_coeffs;  // B_0..B_L, each p x m

  Index order() const { return static_cast<Index>(a_coeffs.size()); }
  Index p() const { return a_coeffs.at(0).rows(); }
  Index m() const { return b_coeffs.at(0).cols(); }

  // Coefficient matrices of the lifted state-space form: A = [A_1..A_L B_1..B_L],
  // B = B_0, state x = [y(t-1..t-L); u(t-1..t-L)].
  Mat coeff_a() const;
  Mat coeff_b() const { return b_coeffs.at(0); }
};

// Shift structure of the lifted AR state equation: bA = [A; J1], bB = [B; J2].
Mat ar_j1(Index p, Index m, Index order);
Mat ar_j2(Index p, Index m, Index order);
// Lifted closed-loop matrix bA + bB K from coefficient matrices (A, B).
Mat ar_lifted_closed_loop(const Mat& a, const Mat& b, const Mat& k, Index p, Index m,
                          Index order);

enum class DataKind { state_space, autoregressive };

// Measured batch data. For the AR variant x_plus holds Y (p x T) and x holds
// the lifted regressor history ((p+m)L x T).
struct DataRecord {
  DataKind kind = DataKind::state_space;
  Mat x_plus;
  Mat x;
  Mat u;
  Index ar_order = 0;  // L, autoregressive only

  Index t() const { return x_plus.cols(); }
  Index q() const { return x_plus.rows(); }
  Index r() const { return x.rows() + u.rows(); }
  // Stacked data bX = [X+^T  -X^T  -U^T]^T.
  Mat stacked() const;
};

// Single-QMI perturbation set D = { E Dhat : Dhat^T in Z(phi_hat) }.
struct SingleModel {
  Mat e;                // (q + r) x n_hat
  qmi::QmiSet phi_hat;  // member of Pi_{n_hat, T}
};

struct StructuredTerm {
  Mat e_j;            // n_d x n_j
  Mat f_j;            // T_j x T
  qmi::QmiSet phi_j;  // member of Pi_{n_j, T_j}
};

// D_str = { sum_j E_j D_j F_j : D_j^T in Z(phi_j) }.
struct StructuredModel {
  std::vector<StructuredTerm> terms;
  Index n_d = 0;
  Index t = 0;
};

class PerturbationModel {
 public:
  static PerturbationModel single(Mat e, qmi::QmiSet phi_hat);
  static PerturbationModel structured(std::vector<StructuredTerm> terms, Index n_d, Index t);

  bool is_single() const { return std::holds_alternative<SingleModel>(v_); }
  const SingleModel& as_single() const { return std::get<SingleModel>(v_); }
  const StructuredModel& as_structured() const { return std::get<StructuredModel>(v_); }

  Index rows() const;  // n_d
  Index t() const;

 private:
  explicit PerturbationModel(std::variant<SingleModel, StructuredModel> v)
      : v_(std::move(v)) {}
  std::variant<SingleModel, StructuredModel> v_;
};

// Named noise-model constructors.
// Energy-bound measurement noise: phi_hat = diag(eps^2 T I, -I_T), E = I.
PerturbationModel measurement_noise_model(Index n, Index m, Index t, double eps);
// Exogenous disturbance: E = [I_n 0]^T, phi_hat = diag(theta, -I_T).
PerturbationModel disturbance_model(Index n, Index m, Index t, const SymMat& theta);
// Subspace-restricted energy bound with E = [I_{2n} 0]^T and theta over 2n rows.
PerturbationModel state_noise_model(Index n, Index m, Index t, double eps);
// Structured: disturbance + measurement superposition.
PerturbationModel structured_disturbance_measurement(Index n, Index m, Index t,
                                                     double eps_d, double eps_m);
// Structured: Hankel perturbation of depth `order` built from one p x (T+order-1) band.
PerturbationModel structured_hankel(Index p, Index t, Index order, double eps);
// Structured: instantaneous bound |d(t)| <= eps through E at each step.
PerturbationModel structured_instantaneous(const Mat& e, Index t, double eps);
// Structured: element-wise bound |delta_ij| <= eps on the full n_d x T matrix.
PerturbationModel structured_elementwise(Index n_d, Index t, double eps);

struct SigmaSet {
  DataRecord data;
  PerturbationModel model;
};

// Trajectory rollout: X columns are states x(0..T-1), X+ their successors.
DataRecord simulate(const LinearSystem& sys, const Vec& x0, const Mat& u_seq);
DataRecord simulate_random(const LinearSystem& sys, const Vec& x0, Index t,
                           std::uint64_t seed);
// i.i.d. standard-normal X and U with X+ = A X + B U.
DataRecord gaussian_data(const LinearSystem& sys, Index t, std::uint64_t seed);
// AR rollout from zero history with i.i.d. standard-normal inputs; the lifted
// regressor matrix is assembled from the trajectory.
DataRecord ar_gaussian_data(const ArSystem& sys, Index t, std::uint64_t seed);

// Measured data per the sign convention Delta = [D_{X+}^T -D_X^T -D_U^T]^T.
DataRecord perturb(const DataRecord& clean, const Mat& delta);

// Markov-chain sampler for (approximately) uniform draws over D or D_str.
// The chain walks the explicit-parametrization ball(s); every emitted sample
// is re-checked for exact QMI membership.
class PerturbationSampler {
 public:
  PerturbationSampler(const PerturbationModel& model, std::uint64_t seed,
                      int burn_in = 1000, int thin = 10);
  Mat next();

 private:
  struct Chain {
    Mat m1;
    Mat center;    // q x r constant part of the parametrization
    Mat q_mat;     // (phi|phi22)^(1/2)
    Mat rinv;      // ((-phi22)^+)^(1/2)
    const qmi::QmiSet* set;
    double step = 0.1;
  };
  void advance(Chain& chain, int steps);
  Mat emit_single();
  Mat emit_structured();

  const PerturbationModel& model_;
  std::vector<Chain> chains_;
  Rng rng_;
  int thin_;
};

Mat sample_perturbation(const PerturbationModel& model, std::uint64_t seed,
                        int burn_in = 1000, int thin = 10);

// Membership (A, B) in Sigma for single-QMI models, decided through the
// explicit parametrization: a range-inclusion test for the kernel part and an
// operator-norm bound on the minimum-norm M1 for the ball part.
bool sigma_contains(const SigmaSet& sigma, const Mat& a, const Mat& b, double tol = 1e-7);

// Consistent-system samples: least-squares representatives of sampled
// perturbations interleaved with consistency-set members, all filtered
// through sigma_contains.
std::vector<std::pair<Mat, Mat>> sample_sigma(const SigmaSet& sigma, int count,
                                              std::uint64_t seed);

}  // namespace qi::datagen
