#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relreg/error.hpp"
#include "relreg/point_cloud.hpp"

namespace relreg {

inline constexpr double kMarginalTol = 1e-6;
inline constexpr double kSimplexTol = 1e-12;
// Gibbs kernel entries are clamped at exp(kLogFloor) to keep every row and
// column strictly positive.
inline constexpr double kLogFloor = -700.0;

// Probability vector on a finite support.
class DiscreteDistribution {
 public:
  explicit DiscreteDistribution(Vector weights) : w_(std::move(weights)) {
    if (w_.size() < 1) throw InvalidInput("DiscreteDistribution: empty support");
    double sum = 0.0;
    for (Index i = 0; i < w_.size(); ++i) {
      if (!std::isfinite(w_(i)) || w_(i) < 0.0) {
        throw InvalidInput("DiscreteDistribution: weight " + std::to_string(i) +
                           " is negative or non-finite");
      }
      sum += w_(i);
    }
    if (std::abs(sum - 1.0) > kSimplexTol) {
      throw InvalidInput("DiscreteDistribution: weights sum to " +
                         std::to_string(sum) + ", expected 1");
    }
  }

  static DiscreteDistribution uniform(Index n) {
    if (n < 1) throw InvalidInput("DiscreteDistribution::uniform: n < 1");
    return DiscreteDistribution(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }

  const Vector& weights() const noexcept { return w_; }
  Index size() const noexcept { return w_.size(); }
  double operator[](Index i) const { return w_(i); }

  bool is_uniform() const noexcept {
    for (Index i = 1; i < w_.size(); ++i) {
      if (w_(i) != w_(0)) return false;
    }
    return true;
  }

 private:
  Vector w_;
};

// Pairwise loss between two supports, squared-distance units.
class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(Matrix entries) : m_(std::move(entries)) {
    if (!m_.allFinite()) throw InvalidInput("CostMatrix: non-finite entry");
  }

  const Matrix& entries() const noexcept { return m_; }
  Index rows() const noexcept { return m_.rows(); }
  Index cols() const noexcept { return m_.cols(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

// Largest absolute deviation of the row and column sums of `t` from (a, b).
inline double marginal_residual(const Matrix& t, const Vector& a, const Vector& b) {
  const double rows = (t.rowwise().sum() - a).cwiseAbs().maxCoeff();
  const double cols = (t.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
  return std::max(rows, cols);
}

// Nonnegative K x N coupling whose marginals match (a, b) within kMarginalTol.
class TransportPlan {
 public:
  TransportPlan(Matrix coupling, DiscreteDistribution a, DiscreteDistribution b)
      : t_(std::move(coupling)), a_(std::move(a)), b_(std::move(b)) {
    if (t_.rows() != a_.size() || t_.cols() != b_.size()) {
      throw InvalidInput("TransportPlan: coupling shape does not match marginals");
    }
    if (!t_.allFinite() || t_.minCoeff() < 0.0) {
      throw InvalidInput("TransportPlan: coupling has negative or non-finite entries");
    }
    const double r = marginal_residual(t_, a_.weights(), b_.weights());
    if (r > kMarginalTol) {
      throw InvalidInput("TransportPlan: marginal residual " + std::to_string(r) +
                         " exceeds tolerance");
    }
  }

  const Matrix& coupling() const noexcept { return t_; }
  const DiscreteDistribution& marginal_a() const noexcept { return a_; }
  const DiscreteDistribution& marginal_b() const noexcept { return b_; }
  double residual() const { return marginal_residual(t_, a_.weights(), b_.weights()); }

 private:
  Matrix t_;
  DiscreteDistribution a_;
  DiscreteDistribution b_;
};

// Projects a nonnegative matrix onto the transport polytope in O(KN):
// shrink over-full rows, then over-full columns, then spread the missing mass
// as a rank-one correction (Altschuler, Weed and Rigollet, 2017).
inline Matrix round_to_marginals(Matrix t, const Vector& a, const Vector& b) {
  for (Index i = 0; i < t.rows(); ++i) {
    const double s = t.row(i).sum();
    if (s > a(i)) t.row(i) *= a(i) / s;
  }
  for (Index j = 0; j < t.cols(); ++j) {
    const double s = t.col(j).sum();
    if (s > b(j)) t.col(j) *= b(j) / s;
  }
  const Vector err_r = (a - t.rowwise().sum()).cwiseMax(0.0);
  const Vector err_c = (b - t.colwise().sum().transpose()).cwiseMax(0.0);
  const double mass = err_r.sum();
  if (mass > 0.0) t.noalias() += err_r * err_c.transpose() / mass;
  return t;
}

struct SinkhornOpts {
  int max_iters = 50;
  double tol = 1e-9;
};

struct SinkhornResult {
  TransportPlan plan;
  double residual = 0.0;  // before the final feasibility rounding
  int iterations = 0;
  bool converged = false;
};

// Scales a nonnegative kernel to the marginals (a, b). Non-convergence is
// reported in the result rather than thrown; the returned plan is always
// rounded onto the feasible set.
inline SinkhornResult sinkhorn(const DiscreteDistribution& a,
                               const DiscreteDistribution& b, const Matrix& kernel,
                               const SinkhornOpts& opts = {}) {
  const Index k = a.size();
  const Index n = b.size();
  if (kernel.rows() != k || kernel.cols() != n) {
    throw InvalidInput("sinkhorn: kernel is " + std::to_string(kernel.rows()) + "x" +
                       std::to_string(kernel.cols()) + ", marginals are " +
                       std::to_string(k) + " and " + std::to_string(n));
  }
  if (!kernel.allFinite() || kernel.minCoeff() < 0.0) {
    throw InvalidInput("sinkhorn: kernel must be finite and nonnegative");
  }
  const Vector& pa = a.weights();
  const Vector& pb = b.weights();
  for (Index i = 0; i < k; ++i) {
    if (pa(i) > 0.0 && kernel.row(i).maxCoeff() <= 0.0) {
      throw SolverDegenerate("sinkhorn: kernel row " + std::to_string(i) + " is all zero");
    }
  }
  for (Index j = 0; j < n; ++j) {
    if (pb(j) > 0.0 && kernel.col(j).maxCoeff() <= 0.0) {
      throw SolverDegenerate("sinkhorn: kernel column " + std::to_string(j) +
                             " is all zero");
    }
  }

  Vector u = Vector::Ones(k);
  Vector v(n);
  Vector ktu = kernel.transpose() * u;
  Vector kv(k);
  int it = 0;
  bool converged = false;
  while (it < opts.max_iters) {
    ++it;
    for (Index j = 0; j < n; ++j) v(j) = pb(j) > 0.0 ? pb(j) / ktu(j) : 0.0;
    kv.noalias() = kernel * v;
    for (Index i = 0; i < k; ++i) u(i) = pa(i) > 0.0 ? pa(i) / kv(i) : 0.0;
    ktu.noalias() = kernel.transpose() * u;
    if (!u.allFinite() || !v.allFinite()) {
      throw SolverDegenerate("sinkhorn: scaling vectors became non-finite");
    }
    // Row sums are exact after the u update; only columns can be off.
    const double col_err = (v.cwiseProduct(ktu) - pb).cwiseAbs().maxCoeff();
    if (col_err < opts.tol) {
      converged = true;
      break;
    }
  }

  Matrix t = u.asDiagonal() * kernel * v.asDiagonal();
  const double residual = marginal_residual(t, pa, pb);
  t = round_to_marginals(std::move(t), pa, pb);
  return SinkhornResult{TransportPlan(std::move(t), a, b), residual, it, converged};
}

// exp(-C / epsilon) with the log clamped at kLogFloor after a shift that
// puts the smallest cost at exp(0).
inline Matrix gibbs_kernel(const CostMatrix& cost, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidInput("gibbs_kernel: epsilon must be positive");
  const double cmin = cost.entries().minCoeff();
  return cost.entries().unaryExpr([&](double c) {
    return std::exp(std::max(-(c - cmin) / epsilon, kLogFloor));
  });
}

// Squared Euclidean distances between the rows of x and y.
inline CostMatrix build_cost_matrix(const PointCloud& x, const PointCloud& y) {
  if (x.empty() || y.empty()) throw InvalidInput("build_cost_matrix: empty point cloud");
  if (x.dim() != y.dim()) {
    throw InvalidInput("build_cost_matrix: dimension mismatch (" +
                       std::to_string(x.dim()) + " vs " + std::to_string(y.dim()) + ")");
  }
  const Matrix& xs = x.samples();
  const Matrix& ys = y.samples();
  Matrix c(xs.rows(), ys.rows());
  for (Index j = 0; j < ys.rows(); ++j) {
    for (Index i = 0; i < xs.rows(); ++i) {
      double s = 0.0;
      for (Index d = 0; d < xs.cols(); ++d) {
        const double diff = xs(i, d) - ys(j, d);
        s += diff * diff;
      }
      c(i, j) = s;
    }
  }
  return CostMatrix(std::move(c));
}

namespace detail {

inline void check_beta(double beta, const char* who) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw InvalidInput(std::string(who) + ": beta must lie in [0, 1], got " +
                       std::to_string(beta));
  }
}

inline void check_fgw_shapes(const CostMatrix& cross, const CostMatrix& intra_p,
                             const CostMatrix& intra_q, const DiscreteDistribution& a,
                             const DiscreteDistribution& b, const char* who) {
  const Index k = a.size();
  const Index n = b.size();
  if (intra_p.rows() != k || intra_p.cols() != k || intra_q.rows() != n ||
      intra_q.cols() != n || cross.rows() != k || cross.cols() != n) {
    throw InvalidInput(std::string(who) + ": expected intra_p " + std::to_string(k) + "x" +
                       std::to_string(k) + ", intra_q " + std::to_string(n) + "x" +
                       std::to_string(n) + ", cross " + std::to_string(k) + "x" +
                       std::to_string(n));
  }
}

// Row-wise sum of squared entries weighted by w. With uniform w the weight is
// left out here and applied once by the caller as 1/size.
inline Vector squared_row_mass(const Matrix& d, const DiscreteDistribution& w) {
  const bool uniform = w.is_uniform();
  Vector out(d.rows());
  for (Index i = 0; i < d.rows(); ++i) {
    double s = 0.0;
    for (Index j = 0; j < d.cols(); ++j) {
      const double sq = d(i, j) * d(i, j);
      s += uniform ? sq : sq * w[j];
    }
    out(i) = s;
  }
  return out;
}

}  // namespace detail

// D = (1 - beta) D_pq + beta (D_p o D_p) a 1^T + beta 1 ((D_q o D_q) b)^T.
// Uniform marginals use the 1/K and 1/N coefficients directly.
inline CostMatrix build_fused_cost(const CostMatrix& cross, const CostMatrix& intra_p,
                                   const CostMatrix& intra_q, double beta,
                                   const DiscreteDistribution& a,
                                   const DiscreteDistribution& b) {
  detail::check_beta(beta, "build_fused_cost");
  detail::check_fgw_shapes(cross, intra_p, intra_q, a, b, "build_fused_cost");
  const Index k = a.size();
  const Index n = b.size();
  const Vector sp = detail::squared_row_mass(intra_p.entries(), a);
  const Vector sq = detail::squared_row_mass(intra_q.entries(), b);
  const double cp = a.is_uniform() ? beta / static_cast<double>(k) : beta;
  const double cq = b.is_uniform() ? beta / static_cast<double>(n) : beta;
  Matrix d(k, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < k; ++i) {
      d(i, j) = (1.0 - beta) * cross(i, j) + cp * sp(i) + cq * sq(j);
    }
  }
  return CostMatrix(std::move(d));
}

// <D - 2 beta D_p T D_q^T, T>.
inline double fgw_objective(const CostMatrix& fused, const CostMatrix& intra_p,
                            const CostMatrix& intra_q, const Matrix& plan, double beta) {
  if (beta == 0.0) return fused.entries().cwiseProduct(plan).sum();
  const Matrix g = intra_p.entries() * plan * intra_q.entries().transpose();
  return (fused.entries() - 2.0 * beta * g).cwiseProduct(plan).sum();
}

enum class WarmStart { product, identity };

struct FgwSolverOpts {
  int outer_iters = 20;           // J
  int inner_sinkhorn_iters = 50;
  double inner_tol = 1e-9;
  double alpha_scale = 0.1;       // alpha = alpha_scale * max(C)
  std::uint64_t seed = 0;         // the solver itself draws nothing
  WarmStart warm_start = WarmStart::product;
  // A proximal step that would raise the objective is retried with alpha
  // doubled, at most this many times, before the solve stops.
  int max_backtracks = 4;
};

struct FgwResult {
  TransportPlan plan;
  double value = 0.0;
  // Objective at the warm start followed by one entry per accepted step.
  std::vector<double> objective_trace;
  int outer_iterations = 0;
  int rejected_steps = 0;
};

namespace detail {

inline void check_solver_opts(const FgwSolverOpts& o) {
  if (o.outer_iters < 1) throw InvalidInput("FgwSolverOpts: outer_iters must be >= 1");
  if (o.inner_sinkhorn_iters < 1) {
    throw InvalidInput("FgwSolverOpts: inner_sinkhorn_iters must be >= 1");
  }
  if (!(o.alpha_scale > 0.0)) throw InvalidInput("FgwSolverOpts: alpha_scale must be > 0");
  if (!(o.inner_tol > 0.0)) throw InvalidInput("FgwSolverOpts: inner_tol must be > 0");
  if (o.max_backtracks < 0) throw InvalidInput("FgwSolverOpts: max_backtracks must be >= 0");
}

inline Matrix warm_start_plan(const DiscreteDistribution& a, const DiscreteDistribution& b,
                              WarmStart mode) {
  if (mode == WarmStart::product) return a.weights() * b.weights().transpose();
  if (a.size() != b.size() ||
      (a.weights() - b.weights()).cwiseAbs().maxCoeff() > kSimplexTol) {
    throw InvalidInput("identity warm start needs equal marginals");
  }
  return Matrix(a.weights().asDiagonal());
}

inline double accept_slack(double f) {
  return std::min(1e-10, 1e-13 * std::max(1.0, std::abs(f)));
}

// Proximal kernel exp(-C / alpha) o T in the log domain.
inline Matrix proximal_kernel(const Matrix& c, const Matrix& t, double alpha) {
  const double cmin = c.minCoeff();
  Matrix logk(c.rows(), c.cols());
  double top = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < c.cols(); ++j) {
    for (Index i = 0; i < c.rows(); ++i) {
      const double l = t(i, j) > 0.0
                           ? -(c(i, j) - cmin) / alpha + std::log(t(i, j))
                           : -std::numeric_limits<double>::infinity();
      logk(i, j) = l;
      top = std::max(top, l);
    }
  }
  return logk.unaryExpr([top](double l) { return std::exp(std::max(l - top, kLogFloor)); });
}

}  // namespace detail

// min over T in Pi(a, b) of <D - 2 beta D_p T D_q^T, T> by proximal-gradient
// steps with a KL penalty; each step is one Sinkhorn problem.
inline FgwResult solve_fgw_discrete(const CostMatrix& cross, const CostMatrix& intra_p,
                                    const CostMatrix& intra_q,
                                    const DiscreteDistribution& a,
                                    const DiscreteDistribution& b, double beta,
                                    const FgwSolverOpts& opts = {}) {
  detail::check_beta(beta, "solve_fgw_discrete");
  detail::check_fgw_shapes(cross, intra_p, intra_q, a, b, "solve_fgw_discrete");
  detail::check_solver_opts(opts);

  const CostMatrix fused = build_fused_cost(cross, intra_p, intra_q, beta, a, b);
  const Matrix& d = fused.entries();
  const Matrix& dp = intra_p.entries();
  const Matrix& dq = intra_q.entries();
  const bool relational = beta > 0.0;

  auto product = [&](const Matrix& t) -> Matrix {
    if (!relational) return Matrix::Zero(t.rows(), t.cols());
    return dp * t * dq.transpose();
  };
  auto objective = [&](const Matrix& t, const Matrix& g) {
    return (d - 2.0 * beta * g).cwiseProduct(t).sum();
  };

  Matrix t = detail::warm_start_plan(a, b, opts.warm_start);
  Matrix g = product(t);
  double f = objective(t, g);
  if (!std::isfinite(f)) throw SolverDegenerate("solve_fgw_discrete: non-finite objective");

  FgwResult out{TransportPlan(t, a, b), f, {f}, 0, 0};
  const SinkhornOpts inner{opts.inner_sinkhorn_iters, opts.inner_tol};

  for (int j = 0; j < opts.outer_iters; ++j) {
    const Matrix c = d - 2.0 * beta * g;
    const double cmax = c.maxCoeff();
    if (cmax - c.minCoeff() <= 0.0) break;  // every feasible plan costs the same
    double alpha = opts.alpha_scale * cmax;
    if (!(alpha > 0.0)) alpha = opts.alpha_scale * c.cwiseAbs().maxCoeff();

    bool accepted = false;
    for (int attempt = 0; attempt <= opts.max_backtracks; ++attempt) {
      const Matrix kernel = detail::proximal_kernel(c, t, alpha);
      SinkhornResult step = sinkhorn(a, b, kernel, inner);
      Matrix g_next = product(step.plan.coupling());
      const double f_next = objective(step.plan.coupling(), g_next);
      if (!std::isfinite(f_next)) {
        throw SolverDegenerate("solve_fgw_discrete: non-finite objective");
      }
      // Steps that only lose to f by rounding noise are kept, so that tiny
      // input perturbations do not flip the accept decision.
      if (f_next <= f + detail::accept_slack(f)) {
        t = step.plan.coupling();
        g = std::move(g_next);
        f = f_next;
        out.plan = std::move(step.plan);
        accepted = true;
        break;
      }
      ++out.rejected_steps;
      alpha *= 2.0;
    }
    if (!accepted) break;
    out.objective_trace.push_back(f);
    ++out.outer_iterations;
  }
  out.value = f;
  return out;
}

// Empirical FGW between two point clouds with squared Euclidean ground and
// intra-space costs. Uniform weights unless given.
inline FgwResult empirical_fgw(const PointCloud& x, const PointCloud& y, double beta,
                               const FgwSolverOpts& opts = {},
                               std::optional<DiscreteDistribution> wx = std::nullopt,
                               std::optional<DiscreteDistribution> wy = std::nullopt) {
  const DiscreteDistribution a = wx ? *wx : DiscreteDistribution::uniform(x.size());
  const DiscreteDistribution b = wy ? *wy : DiscreteDistribution::uniform(y.size());
  const CostMatrix dp = build_cost_matrix(x, x);
  const CostMatrix dq = build_cost_matrix(y, y);
  // The cross cost is only needed when the Wasserstein term is active.
  const CostMatrix cross = (beta < 1.0 || x.dim() == y.dim())
                               ? build_cost_matrix(x, y)
                               : CostMatrix(Matrix::Zero(x.size(), y.size()));
  return solve_fgw_discrete(cross, dp, dq, a, b, beta, opts);
}

}  // namespace relreg
