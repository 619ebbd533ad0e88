#include "lmi/problem.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>

namespace qi::lmi {

namespace {

void check_same_shape(const MatExpr& a, const MatExpr& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw MatError("MatExpr: shape mismatch in +/-");
  }
}

}  // namespace

MatExpr operator+(MatExpr a, const MatExpr& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  check_same_shape(a, b);
  a.cst += b.cst;
  a.terms.insert(a.terms.end(), b.terms.begin(), b.terms.end());
  return a;
}

MatExpr operator-(MatExpr a, const MatExpr& b) { return a + (-1.0 * b); }

MatExpr operator-(MatExpr a) { return -1.0 * a; }

MatExpr operator*(double s, MatExpr a) {
  a.cst *= s;
  for (auto& t : a.terms) t.c *= s;
  return a;
}

MatExpr transpose(const MatExpr& a) {
  MatExpr out;
  out.rows = a.cols;
  out.cols = a.rows;
  out.cst = a.cst.transpose();
  for (const auto& t : a.terms) {
    out.terms.push_back({t.c, t.r.transpose(), t.var, t.l.transpose(), !t.tr});
  }
  return out;
}

VarRef LmiProblem::add_symmetric(const std::string& name, Index dim) {
  const int count = static_cast<int>(dim * (dim + 1) / 2);
  vars_.push_back({VarKind::symmetric, dim, dim, name, num_scalars_, count});
  num_scalars_ += count;
  return {static_cast<int>(vars_.size()) - 1};
}

VarRef LmiProblem::add_rectangular(const std::string& name, Index rows, Index cols) {
  const int count = static_cast<int>(rows * cols);
  vars_.push_back({VarKind::rectangular, rows, cols, name, num_scalars_, count});
  num_scalars_ += count;
  return {static_cast<int>(vars_.size()) - 1};
}

VarRef LmiProblem::add_scalar(const std::string& name) {
  vars_.push_back({VarKind::scalar, 1, 1, name, num_scalars_, 1});
  num_scalars_ += 1;
  return {static_cast<int>(vars_.size()) - 1};
}

MatExpr LmiProblem::v(VarRef x) const {
  const auto& vi = vars_[x.id];
  return vmul(Mat::Identity(vi.rows, vi.rows), x, Mat::Identity(vi.cols, vi.cols));
}

MatExpr LmiProblem::vmul(const Mat& l, VarRef x, const Mat& r, bool transposed,
                         double c) const {
  const auto& vi = vars_[x.id];
  const Index xr = transposed ? vi.cols : vi.rows;
  const Index xc = transposed ? vi.rows : vi.cols;
  if (l.cols() != xr || r.rows() != xc) throw MatError("vmul: dimension mismatch");
  MatExpr e;
  e.rows = l.rows();
  e.cols = r.cols();
  e.cst = Mat::Zero(e.rows, e.cols);
  e.terms.push_back({c, l, x.id, r, transposed});
  return e;
}

MatExpr LmiProblem::smul(const Mat& coeff, VarRef scalar) const {
  if (vars_[scalar.id].kind != VarKind::scalar) throw MatError("smul: not a scalar var");
  MatExpr e;
  e.rows = coeff.rows();
  e.cols = coeff.cols();
  e.cst = Mat::Zero(e.rows, e.cols);
  e.terms.push_back({1.0, coeff, scalar.id, Mat::Identity(coeff.cols(), coeff.cols()), false});
  return e;
}

MatExpr LmiProblem::trace_expr(VarRef x) const {
  const auto& vi = vars_[x.id];
  if (vi.rows != vi.cols) throw MatError("trace_expr: variable not square");
  MatExpr e;
  e.rows = e.cols = 1;
  e.cst = Mat::Zero(1, 1);
  for (Index a = 0; a < vi.rows; ++a) {
    Mat l = Mat::Zero(1, vi.rows);
    l(0, a) = 1.0;
    Mat r = Mat::Zero(vi.cols, 1);
    r(a, 0) = 1.0;
    e.terms.push_back({1.0, l, x.id, r, false});
  }
  return e;
}

MatExpr LmiProblem::entry(VarRef x, Index a, Index b) const {
  const auto& vi = vars_[x.id];
  Mat l = Mat::Zero(1, vi.rows);
  l(0, a) = 1.0;
  Mat r = Mat::Zero(vi.cols, 1);
  r(b, 0) = 1.0;
  return vmul(l, x, r);
}

MatExpr LmiProblem::constant(Mat m) {
  MatExpr e;
  e.rows = m.rows();
  e.cols = m.cols();
  e.cst = std::move(m);
  return e;
}

MatExpr LmiProblem::scalar_const(double s) {
  return constant(Mat::Constant(1, 1, s));
}

int LmiProblem::add_psd(std::vector<std::vector<MatExpr>> grid, bool with_margin) {
  const std::size_t nb = grid.size();
  std::vector<Index> dims(nb, -1);
  for (std::size_t i = 0; i < nb; ++i) {
    if (grid[i].size() != nb) throw MatError("add_psd: grid not square");
    if (grid[i][i].empty()) throw MatError("add_psd: diagonal cell missing");
    dims[i] = grid[i][i].rows;
    if (grid[i][i].cols != dims[i]) throw MatError("add_psd: diagonal cell not square");
  }
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (i >= j || grid[i][j].empty()) continue;
      if (grid[i][j].rows != dims[i] || grid[i][j].cols != dims[j]) {
        throw MatError("add_psd: cell dimension mismatch");
      }
    }
  }
  psd_.push_back({std::move(grid), std::move(dims), with_margin});
  return static_cast<int>(psd_.size()) - 1;
}

int LmiProblem::add_psd(MatExpr e, bool with_margin) {
  std::vector<std::vector<MatExpr>> grid(1);
  grid[0].push_back(std::move(e));
  return add_psd(std::move(grid), with_margin);
}

void LmiProblem::add_nonneg(MatExpr e, bool with_margin) {
  if (e.rows != 1 || e.cols != 1) throw MatError("add_nonneg: expression must be 1x1");
  diag_.push_back({std::move(e), with_margin});
}

void LmiProblem::add_equality(MatExpr e) {
  if (e.empty()) throw MatError("add_equality: empty expression");
  eq_.push_back(std::move(e));
}

void LmiProblem::set_objective(bool maximize, std::vector<std::pair<VarRef, Mat>> weights) {
  obj_maximize_ = maximize;
  obj_ = std::move(weights);
}

namespace {

// Raw derivative piece: term contributes coef * u * v^T for one scalar component.
struct Piece {
  int comp;  // local scalar index within the variable
  double coef;
  Vec u;
  Vec v;
};

}  // namespace

LmiResult LmiProblem::run(bool margin_mode, const SolverOptions& opt) const {
  const int margin_var = margin_mode ? num_scalars_ : -1;
  const int ns = num_scalars_ + (margin_mode ? 1 : 0);

  // Local scalar index of component (a, b) of a variable.
  const auto sym_comp = [](Index dim, Index a, Index b) {
    if (a > b) std::swap(a, b);
    return static_cast<int>(a * dim - a * (a - 1) / 2 + (b - a));
  };

  const auto pieces_of = [&](const MatExpr::Term& t, std::vector<Piece>& out) {
    out.clear();
    const auto& vi = vars_[t.var];
    if (vi.kind == VarKind::scalar) {
      for (Index s = 0; s < t.l.cols(); ++s) {
        Vec u = t.l.col(s);
        Vec w = t.r.row(s).transpose();
        if (u.norm() == 0.0 || w.norm() == 0.0) continue;
        out.push_back({0, t.c, std::move(u), std::move(w)});
      }
      return;
    }
    // zero columns/rows of the sandwich matrices contribute nothing
    std::vector<bool> lz(static_cast<std::size_t>(t.l.cols()));
    std::vector<bool> rz(static_cast<std::size_t>(t.r.rows()));
    for (Index a = 0; a < t.l.cols(); ++a) lz[a] = t.l.col(a).squaredNorm() == 0.0;
    for (Index b = 0; b < t.r.rows(); ++b) rz[b] = t.r.row(b).squaredNorm() == 0.0;
    if (vi.kind == VarKind::symmetric) {
      for (Index a = 0; a < vi.rows; ++a) {
        for (Index b = a; b < vi.cols; ++b) {
          const int comp = sym_comp(vi.rows, a, b);
          if (!lz[a] && !rz[b]) {
            out.push_back({comp, t.c, t.l.col(a), t.r.row(b).transpose()});
          }
          if (a != b && !lz[b] && !rz[a]) {
            out.push_back({comp, t.c, t.l.col(b), t.r.row(a).transpose()});
          }
        }
      }
      return;
    }
    for (Index a = 0; a < vi.rows; ++a) {
      for (Index b = 0; b < vi.cols; ++b) {
        const int comp = static_cast<int>(a * vi.cols + b);
        if (!t.tr) {
          if (!lz[a] && !rz[b]) {
            out.push_back({comp, t.c, t.l.col(a), t.r.row(b).transpose()});
          }
        } else {
          if (!lz[b] && !rz[a]) {
            out.push_back({comp, t.c, t.l.col(b), t.r.row(a).transpose()});
          }
        }
      }
    }
  };

  // --- Assemble dense blocks with pooled factors.
  struct RawDense {
    Index n;
    Mat c0;
    std::vector<Vec> pool;
    std::unordered_map<std::string, int> pool_index;
    std::vector<FactorTerm> terms;
    bool with_margin;
  };
  const auto pool_get = [](RawDense& blk, const Vec& u) {
    std::string key(reinterpret_cast<const char*>(u.data()), sizeof(double) * u.size());
    auto it = blk.pool_index.find(key);
    if (it != blk.pool_index.end()) return it->second;
    const int id = static_cast<int>(blk.pool.size());
    blk.pool.push_back(u);
    blk.pool_index.emplace(std::move(key), id);
    return id;
  };

  std::vector<RawDense> blocks;
  std::vector<Piece> pieces;
  for (const auto& con : psd_) {
    RawDense blk;
    blk.with_margin = con.with_margin;
    const std::size_t nb = con.dims.size();
    std::vector<Index> off(nb + 1, 0);
    for (std::size_t i = 0; i < nb; ++i) off[i + 1] = off[i] + con.dims[i];
    blk.n = off[nb];
    Mat c0 = Mat::Zero(blk.n, blk.n);
    for (std::size_t i = 0; i < nb; ++i) {
      for (std::size_t j = i; j < nb; ++j) {
        const MatExpr& cell = con.grid[i][j];
        if (cell.empty()) continue;
        c0.block(off[i], off[j], cell.rows, cell.cols) += cell.cst;
        if (i != j) {
          c0.block(off[j], off[i], cell.cols, cell.rows) += cell.cst.transpose();
        }
        const double mult = (i == j) ? 1.0 : 2.0;
        for (const auto& t : cell.terms) {
          pieces_of(t, pieces);
          for (auto& pc : pieces) {
            Vec ug = Vec::Zero(blk.n);
            ug.segment(off[i], pc.u.size()) = pc.u;
            Vec vg = Vec::Zero(blk.n);
            vg.segment(off[j], pc.v.size()) = pc.v;
            const int pu = pool_get(blk, ug);
            const int pv = pool_get(blk, vg);
            blk.terms.push_back(
                {vars_[t.var].offset + pc.comp, mult * pc.coef, pu, pv});
          }
        }
      }
    }
    blk.c0 = 0.5 * (c0 + c0.transpose());
    if (margin_mode && blk.with_margin) {
      for (Index a = 0; a < blk.n; ++a) {
        Vec e = Vec::Zero(blk.n);
        e[a] = 1.0;
        const int pid = pool_get(blk, e);
        blk.terms.push_back({margin_var, -1.0, pid, pid});
      }
    }
    blocks.push_back(std::move(blk));
  }

  // --- Single diagonal block gathering the scalar inequalities.
  Vec diag_c0 = Vec::Zero(static_cast<Index>(diag_.size()));
  std::vector<DiagEntry> diag_entries;
  for (std::size_t k = 0; k < diag_.size(); ++k) {
    const auto& con = diag_[k];
    diag_c0[static_cast<Index>(k)] = con.e.cst(0, 0);
    for (const auto& t : con.e.terms) {
      pieces_of(t, pieces);
      for (const auto& pc : pieces) {
        const double coeff = pc.coef * pc.u[0] * pc.v[0];
        if (coeff != 0.0) {
          diag_entries.push_back({vars_[t.var].offset + pc.comp, static_cast<Index>(k), coeff});
        }
      }
    }
    if (margin_mode && con.with_margin) {
      diag_entries.push_back({margin_var, static_cast<Index>(k), -1.0});
    }
  }

  // --- Objective over scalars.
  Vec bfull = Vec::Zero(ns);
  if (margin_mode) {
    bfull[margin_var] = 1.0;
  } else {
    const double sgn = obj_maximize_ ? 1.0 : -1.0;
    for (const auto& [vr, w] : obj_) {
      const auto& vi = vars_[vr.id];
      if (w.rows() != vi.rows || w.cols() != vi.cols) {
        throw MatError("objective: weight shape mismatch");
      }
      if (vi.kind == VarKind::symmetric) {
        for (Index a = 0; a < vi.rows; ++a) {
          for (Index b = a; b < vi.cols; ++b) {
            bfull[vi.offset + sym_comp(vi.rows, a, b)] +=
                sgn * (a == b ? w(a, a) : w(a, b) + w(b, a));
          }
        }
      } else {
        for (Index a = 0; a < vi.rows; ++a) {
          for (Index b = 0; b < vi.cols; ++b) {
            bfull[vi.offset + a * vi.cols + b] += sgn * w(a, b);
          }
        }
      }
    }
  }

  // --- Equalities -> pivot elimination.
  Index neq = 0;
  for (const auto& e : eq_) neq += e.rows * e.cols;
  Mat emat = Mat::Zero(neq, ns);
  Vec erhs = Vec::Zero(neq);
  {
    Index row = 0;
    for (const auto& e : eq_) {
      for (Index a = 0; a < e.rows; ++a) {
        for (Index b = 0; b < e.cols; ++b) {
          erhs[row + a * e.cols + b] = -e.cst(a, b);
        }
      }
      for (const auto& t : e.terms) {
        pieces_of(t, pieces);
        for (const auto& pc : pieces) {
          for (Index a = 0; a < e.rows; ++a) {
            for (Index b = 0; b < e.cols; ++b) {
              emat(row + a * e.cols + b, vars_[t.var].offset + pc.comp) +=
                  pc.coef * pc.u[a] * pc.v[b];
            }
          }
        }
      }
      row += e.rows * e.cols;
    }
  }

  std::vector<int> pivot_col;     // per reduced row
  std::vector<int> comp_map(ns);  // scalar -> free index, or -1-pivot_row
  {
    const double scale = neq > 0 ? std::max(1.0, emat.cwiseAbs().maxCoeff()) : 1.0;
    const double tol = 1e-12 * scale;
    Index rr = 0;
    std::vector<bool> used(ns, false);
    for (Index row = 0; row < neq; ++row) {
      // pivot = largest entry among unused columns of a candidate row
      Index prow = -1, pcol = -1;
      double best = tol;
      for (Index r2 = rr; r2 < neq; ++r2) {
        for (Index c2 = 0; c2 < ns; ++c2) {
          if (used[c2]) continue;
          if (std::abs(emat(r2, c2)) > best) {
            best = std::abs(emat(r2, c2));
            prow = r2;
            pcol = c2;
          }
        }
      }
      if (prow < 0) break;
      emat.row(rr).swap(emat.row(prow));
      std::swap(erhs[rr], erhs[prow]);
      const double piv = emat(rr, pcol);
      emat.row(rr) /= piv;
      erhs[rr] /= piv;
      for (Index r2 = 0; r2 < neq; ++r2) {
        if (r2 == rr) continue;
        const double f = emat(r2, pcol);
        if (f != 0.0) {
          emat.row(r2) -= f * emat.row(rr);
          erhs[r2] -= f * erhs[rr];
        }
      }
      used[pcol] = true;
      pivot_col.push_back(static_cast<int>(pcol));
      ++rr;
    }
    for (Index r2 = rr; r2 < neq; ++r2) {
      if (std::abs(erhs[r2]) > 1e-9 * scale && emat.row(r2).cwiseAbs().maxCoeff() < tol) {
        throw MatError("equality constraints are inconsistent");
      }
    }
    int free_count = 0;
    std::fill(comp_map.begin(), comp_map.end(), 0);
    for (int c = 0; c < ns; ++c) comp_map[c] = used[c] ? -1 : free_count++;
    for (std::size_t r2 = 0; r2 < pivot_col.size(); ++r2) {
      comp_map[pivot_col[r2]] = -1 - static_cast<int>(r2);
    }
  }
  const int nfree = ns - static_cast<int>(pivot_col.size());

  // --- Build the solver problem over free scalars.
  SdpProblem sp;
  sp.num_vars = nfree;
  sp.b = Vec::Zero(nfree);
  for (int c = 0; c < ns; ++c) {
    if (comp_map[c] >= 0) {
      sp.b[comp_map[c]] = bfull[c];
    } else if (!pivot_col.empty()) {
      const int r2 = -1 - comp_map[c];
      // b_piv * y_piv = b_piv * (rhs - sum coef*free)
      for (int f = 0; f < ns; ++f) {
        if (comp_map[f] >= 0 && emat(r2, f) != 0.0) {
          sp.b[comp_map[f]] -= bfull[c] * emat(r2, f);
        }
      }
    }
  }

  for (auto& blk : blocks) {
    DenseBlock db;
    db.n = blk.n;
    db.c0 = blk.c0;
    for (const auto& t : blk.terms) {
      const int cm = comp_map[t.var];
      if (cm >= 0) {
        db.terms.push_back({cm, t.c, t.pu, t.pv});
      } else {
        const int r2 = -1 - cm;
        const Vec& u = blk.pool[t.pu];
        const Vec& v = blk.pool[t.pv];
        if (erhs[r2] != 0.0) {
          db.c0 += erhs[r2] * t.c * 0.5 * (u * v.transpose() + v * u.transpose());
        }
        for (int f = 0; f < ns; ++f) {
          if (comp_map[f] >= 0 && std::abs(emat(r2, f)) > 1e-14) {
            db.terms.push_back({comp_map[f], -emat(r2, f) * t.c, t.pu, t.pv});
          }
        }
      }
    }
    db.pool = Mat(blk.n, static_cast<Index>(blk.pool.size()));
    for (Index c = 0; c < db.pool.cols(); ++c) db.pool.col(c) = blk.pool[c];
    std::sort(db.terms.begin(), db.terms.end(),
              [](const FactorTerm& a, const FactorTerm& b) { return a.var < b.var; });
    sp.dense.push_back(std::move(db));
  }

  if (!diag_entries.empty()) {
    DiagBlock db;
    db.n = diag_c0.size();
    db.c0 = diag_c0;
    for (const auto& e : diag_entries) {
      const int cm = comp_map[e.var];
      if (cm >= 0) {
        db.entries.push_back({cm, e.index, e.c});
      } else {
        const int row = -1 - cm;
        db.c0[e.index] += erhs[row] * e.c;
        for (int f = 0; f < ns; ++f) {
          if (comp_map[f] >= 0 && std::abs(emat(row, f)) > 1e-14) {
            db.entries.push_back({comp_map[f], e.index, -emat(row, f) * e.c});
          }
        }
      }
    }
    std::sort(db.entries.begin(), db.entries.end(),
              [](const DiagEntry& a, const DiagEntry& b) { return a.var < b.var; });
    sp.diag.push_back(std::move(db));
  }

  // --- Solve and map back.
  const SdpSolution sol = solve_sdp(sp, opt);
  Vec full = Vec::Zero(ns);
  for (int c = 0; c < ns; ++c) {
    if (comp_map[c] >= 0) full[c] = sol.y[comp_map[c]];
  }

  // Exact achieved margin at the returned point (margin variable excluded).
  double achieved = std::numeric_limits<double>::quiet_NaN();
  if (margin_mode) {
    Vec yz = sol.y;
    const int tm_free = comp_map[margin_var];
    if (tm_free >= 0) yz[tm_free] = 0.0;
    achieved = std::numeric_limits<double>::infinity();
    std::size_t kdense = 0;
    for (const auto& blk : blocks) {
      const DenseBlock& db = sp.dense[kdense++];
      if (!blk.with_margin) continue;
      Mat x = db.c0;
      for (const auto& t : db.terms) {
        const Vec& u = db.pool.col(t.pu);
        const Vec& v = db.pool.col(t.pv);
        x += yz[t.var] * t.c * 0.5 * (u * v.transpose() + v * u.transpose());
      }
      achieved = std::min(achieved, min_eig(SymMat(x, 1e-3)));
    }
    if (!sp.diag.empty()) {
      const DiagBlock& db = sp.diag[0];
      Vec vals = db.c0;
      for (const auto& e : db.entries) vals[e.index] += e.c * yz[e.var];
      for (std::size_t k = 0; k < diag_.size(); ++k) {
        if (diag_[k].with_margin) {
          achieved = std::min(achieved, vals[static_cast<Index>(k)]);
        }
      }
    }
  }
  for (std::size_t r2 = 0; r2 < pivot_col.size(); ++r2) {
    double val = erhs[r2];
    for (int f = 0; f < ns; ++f) {
      if (comp_map[f] >= 0 && emat(r2, f) != 0.0) val -= emat(r2, f) * full[f];
    }
    full[pivot_col[r2]] = val;
  }

  LmiResult res;
  res.status = sol.status;
  res.objective = sol.objective;
  res.margin = achieved;
  res.gap = sol.gap;
  res.primal_res = sol.primal_res;
  res.dual_res = sol.dual_res;
  res.iterations = sol.iterations;
  for (std::size_t vi = 0; vi < vars_.size(); ++vi) {
    const auto& info = vars_[vi];
    Mat m(info.rows, info.cols);
    if (info.kind == VarKind::symmetric) {
      int c = info.offset;
      for (Index a = 0; a < info.rows; ++a) {
        for (Index b = a; b < info.cols; ++b) {
          m(a, b) = full[c];
          m(b, a) = full[c];
          ++c;
        }
      }
    } else {
      for (Index a = 0; a < info.rows; ++a) {
        for (Index b = 0; b < info.cols; ++b) m(a, b) = full[info.offset + a * info.cols + b];
      }
    }
    res.values.emplace(static_cast<int>(vi), std::move(m));
  }
  return res;
}

LmiResult LmiProblem::solve_max_margin(const SolverOptions& opt) const {
  return run(true, opt);
}

LmiResult LmiProblem::solve_objective(const SolverOptions& opt) const {
  return run(false, opt);
}

}  // namespace qi::lmi
