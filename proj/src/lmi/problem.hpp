#pragma once

#include "lmi/solver.hpp"

#include <map>
#include <string>
#include <vector>

namespace qi::lmi {

struct VarRef {
  int id = -1;
};

enum class VarKind { symmetric, rectangular, scalar };

// Affine matrix expression: cst + sum of c * L * op(X) * R terms. For scalar
// variables the term value is c * y * (L * R).
struct MatExpr {
  Index rows = 0;
  Index cols = 0;
  Mat cst;
  struct Term {
    double c = 1.0;
    Mat l;
    int var = -1;
    Mat r;
    bool tr = false;
  };
  std::vector<Term> terms;

  bool empty() const { return rows == 0 && cols == 0; }
};

MatExpr operator+(MatExpr a, const MatExpr& b);
MatExpr operator-(MatExpr a, const MatExpr& b);
MatExpr operator-(MatExpr a);
MatExpr operator*(double s, MatExpr a);
MatExpr transpose(const MatExpr& a);

struct LmiResult {
  SolveStatus status = SolveStatus::numerical_error;
  double objective = 0.0;
  // Exact margin of the returned point over the margined blocks (max-margin
  // solves only); immune to solver gap error.
  double margin = 0.0;
  double gap = 0.0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  int iterations = 0;
  std::map<int, Mat> values;

  Mat value(VarRef v) const { return values.at(v.id); }
  double scalar(VarRef v) const { return values.at(v.id)(0, 0); }
  // Residuals good enough to trust the verdict even if the solver stopped
  // early; certificates are separately re-verified at the returned point.
  bool acceptable(double tol_res = 1e-6, double tol_gap = 1e-4) const {
    return (status == SolveStatus::optimal) ||
           (primal_res <= tol_res && dual_res <= tol_res && gap <= tol_gap);
  }
};

// Named-variable LMI feasibility/optimization problem with affine PSD
// constraints, linear equalities, and a linear objective. Lowers to the
// block-diagonal SDP cone of solver.hpp. Blocks flagged with_margin receive
// the -t*I shift in solve_max_margin.
class LmiProblem {
 public:
  VarRef add_symmetric(const std::string& name, Index dim);
  VarRef add_rectangular(const std::string& name, Index rows, Index cols);
  VarRef add_scalar(const std::string& name);

  Index var_rows(VarRef v) const { return vars_[v.id].rows; }
  Index var_cols(VarRef v) const { return vars_[v.id].cols; }

  // Expression builders.
  MatExpr v(VarRef x) const;
  MatExpr vmul(const Mat& l, VarRef x, const Mat& r, bool transposed = false,
               double c = 1.0) const;
  MatExpr smul(const Mat& coeff, VarRef scalar) const;  // y * coeff
  MatExpr trace_expr(VarRef x) const;                   // 1x1
  MatExpr entry(VarRef x, Index a, Index b) const;      // 1x1
  static MatExpr constant(Mat m);
  static MatExpr scalar_const(double s);

  // PSD constraint from an upper-triangular block grid (lower cells mirrored;
  // empty cells are zero). Returns the block index.
  int add_psd(std::vector<std::vector<MatExpr>> grid, bool with_margin);
  int add_psd(MatExpr e, bool with_margin);
  // expr >= 0, expr 1x1; lowered into a diagonal block.
  void add_nonneg(MatExpr e, bool with_margin = false);
  void add_equality(MatExpr e);  // e == 0 entrywise

  void set_objective(bool maximize, std::vector<std::pair<VarRef, Mat>> weights);

  // maximize t s.t. every margined block >= t*I; ignores the objective.
  LmiResult solve_max_margin(const SolverOptions& opt = {}) const;
  // optimize the stored objective.
  LmiResult solve_objective(const SolverOptions& opt = {}) const;

 private:
  struct VarInfo {
    VarKind kind;
    Index rows, cols;
    std::string name;
    int offset;  // scalar offset
    int count;
  };
  struct PsdCon {
    std::vector<std::vector<MatExpr>> grid;
    std::vector<Index> dims;
    bool with_margin;
  };
  struct DiagCon {
    MatExpr e;
    bool with_margin;
  };

  LmiResult run(bool margin_mode, const SolverOptions& opt) const;

  std::vector<VarInfo> vars_;
  std::vector<PsdCon> psd_;
  std::vector<DiagCon> diag_;
  std::vector<MatExpr> eq_;
  bool obj_maximize_ = true;
  std::vector<std::pair<VarRef, Mat>> obj_;
  int num_scalars_ = 0;
};

}  // namespace qi::lmi
