#pragma once

#include "matkit/matkit.hpp"

#include <vector>

namespace qi::lmi {

// Inequality-form semidefinite program over y in R^m:
//
//   maximize b^T y   subject to   X_k(y) = C_k + sum_i y_i F_{ki}  >= 0   (all blocks k)
//
// Dense blocks store F_{ki} as sums of symmetric outer products c * sym(u v^T)
// drawn from a per-block vector pool, which keeps the Schur-complement assembly
// cheap for the congruence-structured constraints produced by the LMI layer.
// Diagonal blocks hold elementwise bounds (sign constraints, caps).

struct FactorTerm {
  int var = 0;
  double c = 0.0;
  int pu = 0;  // pool index of u
  int pv = 0;  // pool index of v
};

struct DenseBlock {
  Index n = 0;
  Mat c0;                         // n x n symmetric constant
  Mat pool;                       // n x K columns referenced by terms
  std::vector<FactorTerm> terms;  // sorted by var
};

struct DiagEntry {
  int var = 0;
  Index index = 0;
  double c = 0.0;
};

struct DiagBlock {
  Index n = 0;
  Vec c0;
  std::vector<DiagEntry> entries;  // sorted by var
};

struct SdpProblem {
  int num_vars = 0;
  Vec b;  // maximize b^T y
  std::vector<DenseBlock> dense;
  std::vector<DiagBlock> diag;
};

enum class SolveStatus { optimal, max_iterations, stalled, numerical_error };

struct SdpSolution {
  SolveStatus status = SolveStatus::numerical_error;
  Vec y;
  double objective = 0.0;
  double gap = 0.0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  int iterations = 0;
};

struct SolverOptions {
  double tol = 1e-9;
  int max_iter = 250;
  bool verbose = false;
};

SdpSolution solve_sdp(const SdpProblem& prob, const SolverOptions& opt = {});

}  // namespace qi::lmi
