#pragma once

// Reference implementations used only by the tests. They follow the textbook
// definitions directly and share no code with the library kernels.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "relreg/rng.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix random_matrix(relreg::RngStream& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline Matrix sq_dist(const Matrix& x, const Matrix& y) {
  Matrix d(x.rows(), y.rows());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < y.rows(); ++j) d(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  return d;
}

// (1-beta) sum_ij Dpq_ij T_ij + beta sum_ijkl (Dp_ik - Dq_jl)^2 T_ij T_kl
inline double fgw_quartic(const Matrix& dpq, const Matrix& dp, const Matrix& dq,
                          const Matrix& t, double beta) {
  double w = 0.0;
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) w += dpq(i, j) * t(i, j);
  double gw = 0.0;
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j)
      for (int k = 0; k < t.rows(); ++k)
        for (int l = 0; l < t.cols(); ++l) {
          const double e = dp(i, k) - dq(j, l);
          gw += e * e * t(i, j) * t(k, l);
        }
  return (1.0 - beta) * w + beta * gw;
}

// Minimum of fgw_quartic over the N! scaled permutation matrices.
inline double permutation_min(const Matrix& dpq, const Matrix& dp, const Matrix& dq,
                              double beta) {
  const int n = static_cast<int>(dp.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    Matrix t = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) t(i, perm[i]) = 1.0 / n;
    best = std::min(best, fgw_quartic(dpq, dp, dq, t, beta));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double logsumexp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

// Log-domain Sinkhorn for min <C, T> + eps KL(T | a b^T); returns the plan.
inline Matrix log_sinkhorn(const Vector& a, const Vector& b, const Matrix& c, double eps,
                           int iters) {
  Vector f = Vector::Zero(a.size());
  Vector g = Vector::Zero(b.size());
  for (int it = 0; it < iters; ++it) {
    for (int i = 0; i < a.size(); ++i) {
      Vector v = (g.array() - c.row(i).transpose().array()) / eps;
      f(i) = eps * (std::log(a(i)) - logsumexp(v));
    }
    for (int j = 0; j < b.size(); ++j) {
      Vector v = (f.array() - c.col(j).array()) / eps;
      g(j) = eps * (std::log(b(j)) - logsumexp(v));
    }
  }
  Matrix t(a.size(), b.size());
  for (int i = 0; i < a.size(); ++i)
    for (int j = 0; j < b.size(); ++j) t(i, j) = std::exp((f(i) + g(j) - c(i, j)) / eps);
  return t;
}

}  // namespace oracle
