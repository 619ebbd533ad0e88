#pragma once

#include "datagen/datagen.hpp"
#include "lmi/problem.hpp"
#include "qmi/qmi.hpp"

#include <map>
#include <optional>
#include <string>

namespace qi::informativity {

using datagen::DataRecord;
using datagen::PerturbationModel;

// Consistent-set matrix N = [E bX] phi_hat [E bX]^T together with its
// ellipsoid verdict and the orthonormal basis of im N22.
struct ConsistencyMatrix {
  qmi::QmiSet n_set;
  bool in_pi = false;
  Index n22_rank = 0;
  Mat v_basis;  // r x rank(N22)
};

ConsistencyMatrix build_n(const DataRecord& data, const PerturbationModel& model);

// N(phi) = [I bX] phi [I bX]^T for the structured-perturbation path.
qmi::QmiSet structured_consistency(const DataRecord& data, const SymMat& phi);

enum class SynthStatus { informative_certified, not_certified, solver_error };

struct SynthesisResult {
  SynthStatus status = SynthStatus::solver_error;
  std::string method;
  Mat k;
  Mat p_or_y;
  Mat l;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;  // performance level where applicable
  // worst re-verification residual (min eigenvalue over certificate blocks,
  // relative scale); certified results keep this >= -1e-7
  double residual = 0.0;
  // true when im E contains im [I 0]^T or phi22 < 0, so the LMI verdict is
  // necessary as well as sufficient
  bool necessary_and_sufficient = false;
  std::map<std::string, Mat> aux;
  double wall_time_ms = 0.0;

  bool certified() const { return status == SynthStatus::informative_certified; }
};

// Certification threshold: strict inequalities hold with margin >= this value
// under the trace normalization built into each problem.
inline constexpr double kCertMargin = 1e-6;

// Quadratic stabilization, Lyapunov-shaped LMI over (P, L, alpha, beta).
SynthesisResult synth_qstab(const DataRecord& data, const PerturbationModel& model);

// Numerically stable reformulation on the range of N22 (requires N in Pi;
// otherwise the data cannot be informative and not_certified is returned).
SynthesisResult synth_qstab_stable(const DataRecord& data, const PerturbationModel& model);

SynthesisResult synth_h2(const DataRecord& data, const PerturbationModel& model,
                         const Mat& c, const Mat& d, double gamma);
SynthesisResult synth_h2_optimal(const DataRecord& data, const PerturbationModel& model,
                                 const Mat& c, const Mat& d);
SynthesisResult synth_hinf(const DataRecord& data, const PerturbationModel& model,
                           const Mat& c, const Mat& d, double gamma);

// Output-feedback stabilization of the AR model via the lifted state.
SynthesisResult synth_ar(const DataRecord& data, const PerturbationModel& model);

// Outer single-QMI approximation constraint for a structured set: assembles
// the multiplier LMI into `prob` and returns the variable handles.
struct OuterPhiVars {
  lmi::VarRef phi;                  // symmetric (n_d + T)
  std::vector<lmi::VarRef> alphas;  // J nonnegative multipliers
  int block = -1;                   // index of the PSD block
};
OuterPhiVars add_outer_phi_constraint(lmi::LmiProblem& prob,
                                      const datagen::StructuredModel& model,
                                      bool with_margin);

// Standalone problem carrying only the outer-approximation constraint.
struct OuterPhiLmi {
  lmi::LmiProblem problem;
  OuterPhiVars vars;
};
OuterPhiLmi build_outer_phi_lmi(const PerturbationModel& model);

// Residual of the outer approximation at fixed (phi, alphas): min eigenvalue
// of the multiplier LMI, relative scale.
double outer_phi_residual(const datagen::StructuredModel& model, const SymMat& phi,
                          const std::vector<double>& alphas);

struct CodesignOptions {
  // When the joint solve fails, lift a two-step certificate through the
  // multiplier-absorption map and re-verify it.
  bool twostep_fallback = true;
};

SynthesisResult synth_structured_codesign(const DataRecord& data,
                                          const PerturbationModel& model,
                                          const CodesignOptions& opt = {});
// Baseline: smallest-trace outer approximation first, controller second.
SynthesisResult synth_structured_twostep(const DataRecord& data,
                                         const PerturbationModel& model);

}  // namespace qi::informativity
