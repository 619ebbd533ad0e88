#include "matkit/matkit.hpp"

#include <cmath>

namespace qi {

bool all_finite(const Mat& a) { return a.allFinite(); }

double tol_scale(const Mat& a) { return std::max(1.0, a.norm()); }

SymMat::SymMat(Mat a, double sym_tol) {
  if (a.rows() != a.cols()) {
    throw MatError("SymMat: matrix is not square (" + std::to_string(a.rows()) + "x" +
                   std::to_string(a.cols()) + ")");
  }
  if (!a.allFinite()) throw MatError("SymMat: non-finite entries");
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (a.rows() > 0 && asym > sym_tol * tol_scale(a)) {
    throw MatError("SymMat: asymmetry " + std::to_string(asym) + " exceeds tolerance");
  }
  a_ = 0.5 * (a + a.transpose());
}

SymMat SymMat::Diag(const Vec& d) {
  Mat a = Mat::Zero(d.size(), d.size());
  a.diagonal() = d;
  return SymMat(std::move(a));
}

SymMat SymMat::block(Index i, Index j, Index rows, Index cols) const {
  return SymMat(Mat(a_.block(i, j, rows, cols)));
}

EigDecomp eig_sym(const SymMat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a.mat());
  if (es.info() != Eigen::Success) throw MatError("eig_sym: eigensolver failed");
  return EigDecomp{es.eigenvalues(), es.eigenvectors()};
}

double min_eig(const SymMat& a) {
  if (a.dim() == 0) return 0.0;
  return eig_sym(a).values.minCoeff();
}

double max_abs_eig(const SymMat& a) {
  if (a.dim() == 0) return 0.0;
  const Vec v = eig_sym(a).values;
  return std::max(std::abs(v.minCoeff()), std::abs(v.maxCoeff()));
}

namespace {

// Applies f to eigenvalues above the rank cutoff, zero below it.
SymMat eig_apply(const SymMat& a, double rank_tol, double (*f)(double)) {
  const EigDecomp ed = eig_sym(a);
  const double cutoff = rank_tol * (a.dim() > 0 ? ed.values.cwiseAbs().maxCoeff() : 0.0);
  Vec w = Vec::Zero(ed.values.size());
  for (Index i = 0; i < w.size(); ++i) {
    if (std::abs(ed.values[i]) > cutoff) w[i] = f(ed.values[i]);
  }
  return SymMat(ed.vectors * w.asDiagonal() * ed.vectors.transpose(), 1e-6);
}

}  // namespace

SymMat pinv(const SymMat& a, double rank_tol) {
  if (!a.mat().allFinite()) throw MatError("pinv: non-finite input");
  return eig_apply(a, rank_tol, [](double x) { return 1.0 / x; });
}

Index numerical_rank(const SymMat& a, double rank_tol) {
  if (a.dim() == 0) return 0;
  const Vec v = eig_sym(a).values;
  const double cutoff = rank_tol * v.cwiseAbs().maxCoeff();
  Index r = 0;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > cutoff) ++r;
  }
  return r;
}

SymMat psd_sqrt(const SymMat& a, double psd_tol) {
  const EigDecomp ed = eig_sym(a);
  const double floor = -psd_tol * tol_scale(a.mat());
  Vec w = Vec::Zero(ed.values.size());
  for (Index i = 0; i < w.size(); ++i) {
    if (ed.values[i] < floor) {
      throw MatError("psd_sqrt: eigenvalue " + std::to_string(ed.values[i]) +
                     " below the PSD clipping window");
    }
    w[i] = std::sqrt(std::max(0.0, ed.values[i]));
  }
  return SymMat(ed.vectors * w.asDiagonal() * ed.vectors.transpose(), 1e-6);
}

SymMat psd_pinv_sqrt(const SymMat& a, double psd_tol, double rank_tol) {
  const EigDecomp ed = eig_sym(a);
  const double floor = -psd_tol * tol_scale(a.mat());
  const double cutoff = rank_tol * (a.dim() > 0 ? ed.values.cwiseAbs().maxCoeff() : 0.0);
  Vec w = Vec::Zero(ed.values.size());
  for (Index i = 0; i < w.size(); ++i) {
    if (ed.values[i] < floor) {
      throw MatError("psd_pinv_sqrt: eigenvalue below the PSD clipping window");
    }
    if (ed.values[i] > cutoff) w[i] = 1.0 / std::sqrt(ed.values[i]);
  }
  return SymMat(ed.vectors * w.asDiagonal() * ed.vectors.transpose(), 1e-6);
}

SymMat schur_complement(const SymMat& m, Index split, double rank_tol) {
  if (split > m.dim()) throw MatError("schur_complement: split exceeds dimension");
  const Index r = m.dim() - split;
  const Mat a = m.sub(0, 0, split, split);
  const Mat b = m.sub(0, split, split, r);
  const SymMat d = m.block(split, split, r, r);
  return SymMat(a - b * pinv(d, rank_tol).mat() * b.transpose(), 1e-6);
}

Mat range_basis(const SymMat& a, double rank_tol) {
  const EigDecomp ed = eig_sym(a);
  const double cutoff = rank_tol * (a.dim() > 0 ? ed.values.cwiseAbs().maxCoeff() : 0.0);
  std::vector<Index> keep;
  for (Index i = 0; i < ed.values.size(); ++i) {
    if (std::abs(ed.values[i]) > cutoff) keep.push_back(i);
  }
  Mat v(a.dim(), static_cast<Index>(keep.size()));
  for (Index j = 0; j < v.cols(); ++j) v.col(j) = ed.vectors.col(keep[j]);
  return v;
}

bool kernel_contains(const SymMat& a, const Mat& b, double tol) {
  if (b.cols() != a.dim()) throw MatError("kernel_contains: dimension mismatch");
  const Mat proj = Mat::Identity(a.dim(), a.dim()) - pinv(a).mat() * a.mat();
  return (b * proj).norm() <= tol * tol_scale(b);
}

bool is_psd(const SymMat& a, double tol) { return min_eig(a) >= -tol * tol_scale(a.mat()); }

bool is_nsd(const SymMat& a, double tol) {
  if (a.dim() == 0) return true;
  return eig_sym(a).values.maxCoeff() <= tol * tol_scale(a.mat());
}

double op_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  return a.jacobiSvd().singularValues()[0];
}

}  // namespace qi
