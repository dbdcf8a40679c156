#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "relreg/error.hpp"
#include "relreg/ot_core.hpp"

namespace relreg {

inline constexpr double kStdFloor = 1e-6;

// N(mean, diag(std^2)).
class DiagGaussian {
 public:
  // Standard deviations below kStdFloor are raised to it.
  DiagGaussian(Vector mean, Vector std) : DiagGaussian(std::move(mean), std::move(std), true) {}

  // Keeps the given standard deviations as they are, zeros included. Meant for
  // tests that need exact point masses.
  static DiagGaussian exact(Vector mean, Vector std) {
    return DiagGaussian(std::move(mean), std::move(std), false);
  }

  const Vector& mean() const noexcept { return mean_; }
  const Vector& std() const noexcept { return std_; }
  Index dim() const noexcept { return mean_.size(); }

 private:
  DiagGaussian(Vector mean, Vector std, bool floor) : mean_(std::move(mean)), std_(std::move(std)) {
    if (mean_.size() != std_.size()) {
      throw InvalidInput("DiagGaussian: mean has " + std::to_string(mean_.size()) +
                         " entries, std has " + std::to_string(std_.size()));
    }
    if (!mean_.allFinite() || !std_.allFinite() || (std_.size() > 0 && std_.minCoeff() < 0.0)) {
      throw InvalidInput("DiagGaussian: non-finite mean or negative std");
    }
    if (floor) std_ = std_.cwiseMax(kStdFloor);
  }

  Vector mean_;
  Vector std_;
};

// Finite mixture of diagonal Gaussians sharing one dimension. Component
// parameters are stored row-wise: means(k, :) and stds(k, :).
class GaussianMixture {
 public:
  GaussianMixture(const std::vector<DiagGaussian>& components, DiscreteDistribution weights)
      : weights_(std::move(weights)) {
    if (components.empty()) throw InvalidInput("GaussianMixture: no components");
    const Index dim = components.front().dim();
    means_.resize(static_cast<Index>(components.size()), dim);
    stds_.resize(static_cast<Index>(components.size()), dim);
    for (std::size_t k = 0; k < components.size(); ++k) {
      if (components[k].dim() != dim) {
        throw InvalidInput("GaussianMixture: component " + std::to_string(k) +
                           " has dimension " + std::to_string(components[k].dim()) +
                           ", expected " + std::to_string(dim));
      }
      means_.row(static_cast<Index>(k)) = components[k].mean().transpose();
      stds_.row(static_cast<Index>(k)) = components[k].std().transpose();
    }
    check_weights();
  }

  static GaussianMixture uniform(const std::vector<DiagGaussian>& components) {
    return GaussianMixture(components,
                           DiscreteDistribution::uniform(static_cast<Index>(components.size())));
  }

  // Row-wise parameters; stds are floored at kStdFloor.
  static GaussianMixture from_rows(Matrix means, Matrix stds, DiscreteDistribution weights) {
    if (!(stds.array() >= 0.0).all()) throw InvalidInput("GaussianMixture: negative std");
    return GaussianMixture(std::move(means), stds.cwiseMax(kStdFloor), std::move(weights));
  }

  static GaussianMixture from_rows(Matrix means, Matrix stds) {
    const Index k = means.rows();
    return from_rows(std::move(means), std::move(stds), DiscreteDistribution::uniform(k));
  }

  Index size() const noexcept { return means_.rows(); }
  Index dim() const noexcept { return means_.cols(); }
  const Matrix& means() const noexcept { return means_; }
  const Matrix& stds() const noexcept { return stds_; }
  const DiscreteDistribution& weights() const noexcept { return weights_; }

  DiagGaussian component(Index k) const {
    return DiagGaussian::exact(means_.row(k).transpose(), stds_.row(k).transpose());
  }

 private:
  GaussianMixture(Matrix means, Matrix stds, DiscreteDistribution weights)
      : means_(std::move(means)), stds_(std::move(stds)), weights_(std::move(weights)) {
    if (means_.rows() < 1) throw InvalidInput("GaussianMixture: no components");
    if (means_.rows() != stds_.rows() || means_.cols() != stds_.cols()) {
      throw InvalidInput("GaussianMixture: means and stds differ in shape");
    }
    if (!means_.allFinite() || !stds_.allFinite()) {
      throw InvalidInput("GaussianMixture: non-finite parameter");
    }
    check_weights();
  }

  void check_weights() const {
    if (weights_.size() != means_.rows()) {
      throw InvalidInput("GaussianMixture: " + std::to_string(weights_.size()) +
                         " weights for " + std::to_string(means_.rows()) + " components");
    }
  }

  Matrix means_;
  Matrix stds_;
  DiscreteDistribution weights_;
};

namespace detail {

template <typename A, typename B, typename C, typename D>
double w2_rows(const A& mean_p, const B& std_p, const C& mean_q, const D& std_q) {
  double s = 0.0;
  for (Index d = 0; d < mean_p.size(); ++d) {
    const double dm = mean_p(d) - mean_q(d);
    s += dm * dm;
  }
  for (Index d = 0; d < std_p.size(); ++d) {
    const double ds = std_p(d) - std_q(d);
    s += ds * ds;
  }
  return s;
}

}  // namespace detail

// Squared 2-Wasserstein distance between diagonal Gaussians:
// |mu_p - mu_q|^2 + |sigma_p - sigma_q|^2.
inline double gaussian_w2_diag(const DiagGaussian& p, const DiagGaussian& q) {
  if (p.dim() != q.dim()) {
    throw InvalidInput("gaussian_w2_diag: dimension mismatch (" + std::to_string(p.dim()) +
                       " vs " + std::to_string(q.dim()) + ")");
  }
  return detail::w2_rows(p.mean(), p.std(), q.mean(), q.std());
}

// [W2(P_k, Q_n)], K x N.
inline CostMatrix gmm_pairwise_w2(const GaussianMixture& p, const GaussianMixture& q) {
  if (p.dim() != q.dim()) {
    throw InvalidInput("gmm_pairwise_w2: dimension mismatch (" + std::to_string(p.dim()) +
                       " vs " + std::to_string(q.dim()) + ")");
  }
  Matrix out(p.size(), q.size());
  for (Index n = 0; n < q.size(); ++n) {
    for (Index k = 0; k < p.size(); ++k) {
      out(k, n) = detail::w2_rows(p.means().row(k), p.stds().row(k), q.means().row(n),
                                  q.stds().row(n));
    }
  }
  return CostMatrix(std::move(out));
}

// [W2(P_k, P_k')], symmetric with a zero diagonal.
inline CostMatrix gmm_self_w2(const GaussianMixture& p) {
  Matrix out = Matrix::Zero(p.size(), p.size());
  for (Index j = 0; j < p.size(); ++j) {
    for (Index i = j + 1; i < p.size(); ++i) {
      const double v = detail::w2_rows(p.means().row(i), p.stds().row(i), p.means().row(j),
                                       p.stds().row(j));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return CostMatrix(std::move(out));
}

// FGW between the component-weight distributions of two mixtures, using
// component-level W2 as both the cross and the intra-space distance.
// beta = 0 gives the hierarchical Wasserstein distance, beta = 1 the
// hierarchical Gromov-Wasserstein distance; only the latter accepts mixtures
// of different dimensions.
inline FgwResult hierarchical_fgw(const GaussianMixture& p, const GaussianMixture& q, double beta,
                                  const FgwSolverOpts& opts = {}) {
  detail::check_beta(beta, "hierarchical_fgw");
  if (beta < 1.0 && p.dim() != q.dim()) {
    throw InvalidInput("hierarchical_fgw: beta < 1 needs mixtures of equal dimension (" +
                       std::to_string(p.dim()) + " vs " + std::to_string(q.dim()) + ")");
  }
  const CostMatrix cross =
      beta < 1.0 ? gmm_pairwise_w2(p, q) : CostMatrix(Matrix::Zero(p.size(), q.size()));
  return solve_fgw_discrete(cross, gmm_self_w2(p), gmm_self_w2(q), p.weights(), q.weights(),
                            beta, opts);
}

// Value of <D - 2 beta D_p T D_q^T, T> at a fixed plan T and its gradient
// with respect to every component mean and std of both mixtures.
struct FrozenPlanGradient {
  double value = 0.0;
  Matrix d_mean_p, d_std_p;  // K x M_p
  Matrix d_mean_q, d_std_q;  // N x M_q
};

namespace detail {

// Accumulates d/dX of sum_{i,j} g(i,j) |X_i - X_j|^2 into `out` (rows of X).
inline void add_self_distance_grad(const Matrix& g, const Matrix& x, Matrix& out) {
  const Matrix s = g + g.transpose();
  const Vector deg = s.rowwise().sum();
  out.noalias() += 2.0 * (deg.asDiagonal() * x - s * x);
}

}  // namespace detail

inline FrozenPlanGradient hfgw_frozen_gradient(const GaussianMixture& p, const GaussianMixture& q,
                                               const Matrix& plan, double beta) {
  detail::check_beta(beta, "hfgw_frozen_gradient");
  if (plan.rows() != p.size() || plan.cols() != q.size()) {
    throw InvalidInput("hfgw_frozen_gradient: plan shape does not match the mixtures");
  }
  const bool has_cross = beta < 1.0;
  if (has_cross && p.dim() != q.dim()) {
    throw InvalidInput("hfgw_frozen_gradient: beta < 1 needs mixtures of equal dimension");
  }
  const CostMatrix dp = gmm_self_w2(p);
  const CostMatrix dq = gmm_self_w2(q);
  const CostMatrix cross =
      has_cross ? gmm_pairwise_w2(p, q) : CostMatrix(Matrix::Zero(p.size(), q.size()));
  const CostMatrix fused = build_fused_cost(cross, dp, dq, beta, p.weights(), q.weights());

  FrozenPlanGradient out;
  out.value = fgw_objective(fused, dp, dq, plan, beta);
  out.d_mean_p = Matrix::Zero(p.size(), p.dim());
  out.d_std_p = Matrix::Zero(p.size(), p.dim());
  out.d_mean_q = Matrix::Zero(q.size(), q.dim());
  out.d_std_q = Matrix::Zero(q.size(), q.dim());

  if (has_cross) {
    // d/dD_pq = (1 - beta) T
    const Matrix g = (1.0 - beta) * plan;
    const Vector row = g.rowwise().sum();
    const Vector col = g.colwise().sum().transpose();
    out.d_mean_p.noalias() += 2.0 * (row.asDiagonal() * p.means() - g * q.means());
    out.d_std_p.noalias() += 2.0 * (row.asDiagonal() * p.stds() - g * q.stds());
    out.d_mean_q.noalias() += 2.0 * (col.asDiagonal() * q.means() - g.transpose() * p.means());
    out.d_std_q.noalias() += 2.0 * (col.asDiagonal() * q.stds() - g.transpose() * p.stds());
  }
  if (beta > 0.0) {
    const Matrix& mp = dp.entries();
    const Matrix& mq = dq.entries();
    // Constant terms of the fused cost: beta * sum_k u_k sum_k' w_k' Dp_kk'^2.
    const double cp = p.weights().is_uniform() ? beta / static_cast<double>(p.size()) : beta;
    const double cq = q.weights().is_uniform() ? beta / static_cast<double>(q.size()) : beta;
    const Vector wp = p.weights().is_uniform() ? Vector::Ones(p.size()) : p.weights().weights();
    const Vector wq = q.weights().is_uniform() ? Vector::Ones(q.size()) : q.weights().weights();
    const Vector u = plan.rowwise().sum();
    const Vector v = plan.colwise().sum().transpose();
    const Matrix gp = 2.0 * cp * mp.cwiseProduct(u * wp.transpose()) -
                      2.0 * beta * plan * mq * plan.transpose();
    const Matrix gq = 2.0 * cq * mq.cwiseProduct(v * wq.transpose()) -
                      2.0 * beta * plan.transpose() * mp * plan;
    detail::add_self_distance_grad(gp, p.means(), out.d_mean_p);
    detail::add_self_distance_grad(gp, p.stds(), out.d_std_p);
    detail::add_self_distance_grad(gq, q.means(), out.d_mean_q);
    detail::add_self_distance_grad(gq, q.stds(), out.d_std_q);
  }
  return out;
}

}  // namespace relreg
