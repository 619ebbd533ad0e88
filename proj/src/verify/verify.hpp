#pragma once

#include "datagen/datagen.hpp"
#include "qmi/qmi.hpp"

#include <cstdint>
#include <vector>

namespace qi::verify {

struct SampleDetail {
  Mat a;
  Mat b;
  double metric = 0.0;  // spectral radius, or closed-loop norm
  bool pass = false;
};

struct VerificationReport {
  int n_samples = 0;
  int violations = 0;
  double worst_margin = 0.0;  // smallest pass margin over the samples
  std::vector<SampleDetail> detail;
};

double spectral_radius(const Mat& a);

// Closed-loop H2 norm of C_cl (zI - A_cl)^{-1} with unit input matrix, via the
// controllability Gramian of the discrete Lyapunov equation.
double h2_norm_gramian(const Mat& a_cl, const Mat& c_cl);
// Independent route: truncated impulse-energy sum.
double h2_norm_impulse(const Mat& a_cl, const Mat& c_cl, double tol = 1e-12);

// Bounded-real test: exists P > 0 with the discrete H-infinity LMI at level
// gamma; decided by the interior-point backend.
bool bounded_real_feasible(const Mat& a_cl, const Mat& c_cl, double gamma);
// H-infinity norm by bisection on the bounded-real LMI.
double hinf_norm(const Mat& a_cl, const Mat& c_cl, double rel_tol = 1e-6);

// Samples the consistent set and checks spectral radius < 1 per sample; when a
// certificate P is supplied the common-Lyapunov residual must also be positive.
// Borderline radii within 1e-10 of 1 count as violations.
VerificationReport verify_stabilization(const datagen::SigmaSet& sigma, const Mat& k,
                                        int n_samples, std::uint64_t seed,
                                        const Mat* p_cert = nullptr);

// Same check over exact members of a consistency QMI set (used for the
// structured path, where the certificate covers Z(N(Phi))).
VerificationReport verify_stabilization_set(const qmi::QmiSet& consistent, const Mat& k,
                                            int n_samples, std::uint64_t seed);

enum class PerfKind { h2, hinf };

VerificationReport verify_performance(const datagen::SigmaSet& sigma, const Mat& k,
                                      const Mat& c, const Mat& d, double gamma,
                                      PerfKind kind, int n_samples, std::uint64_t seed);

// Small-instance inclusion oracle Z(N) subset Z+(M) by dense sampling of the
// ellipsoid parametrization with local refinement around the worst point.
// `restricted` (optional) reports that unbounded directions were boxed.
bool brute_inclusion(const SymMat& n, const SymMat& m, Index q, int grid,
                     bool* restricted = nullptr);

}  // namespace qi::verify
