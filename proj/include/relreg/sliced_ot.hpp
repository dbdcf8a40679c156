#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "relreg/error.hpp"
#include "relreg/ot_core.hpp"
#include "relreg/point_cloud.hpp"
#include "relreg/rng.hpp"

namespace relreg {

// L unit directions in R^M, one per row.
struct ProjectionSet {
  Matrix directions;
  std::uint64_t seed = 0;

  Index count() const noexcept { return directions.rows(); }
  Index dim() const noexcept { return directions.cols(); }
};

// Directions drawn as normalised standard normal vectors, i.e. uniform on the
// sphere. Draws with zero norm are repeated.
inline ProjectionSet sample_projections(Index dim, Index count, RngStream& rng) {
  if (dim < 1 || count < 1) {
    throw InvalidInput("sample_projections: dimension and count must be >= 1");
  }
  ProjectionSet out{Matrix(count, dim), rng.seed()};
  Vector v(dim);
  for (Index l = 0; l < count; ++l) {
    double norm = 0.0;
    do {
      for (Index d = 0; d < dim; ++d) v(d) = rng.normal();
      norm = v.norm();
    } while (!(norm > 0.0));
    out.directions.row(l) = (v / norm).transpose();
  }
  return out;
}

inline ProjectionSet sample_projections(Index dim, Index count, std::uint64_t seed) {
  RngStream rng(seed, StreamId::projections);
  return sample_projections(dim, count, rng);
}

enum class PermutationKind { identity, anti_identity };

struct SliceSolution {
  PermutationKind permutation_kind = PermutationKind::identity;
  double value = 0.0;
};

namespace detail {

inline void check_sorted(std::span<const double> v, const char* who) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i - 1] <= v[i])) {
      throw InvalidInput(std::string(who) + ": input is not sorted ascending at index " +
                         std::to_string(i));
    }
  }
}

inline void check_pair(std::span<const double> x, std::span<const double> y, const char* who) {
  if (x.empty() || x.size() != y.size()) {
    throw InvalidInput(std::string(who) + ": inputs must be nonempty and of equal length (" +
                       std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
}

inline double matched(std::span<const double> y, PermutationKind kind, std::size_t i) {
  return kind == PermutationKind::identity ? y[i] : y[y.size() - 1 - i];
}

}  // namespace detail

// (1-beta)/N sum_i (x_i - y_s(i))^2
//   + beta/N sum_{i,j} ((x_i - x_j)^2 - (y_s(i) - y_s(j))^2)^2
// where s is the identity or the reversal.
inline double fgw_1d_objective(std::span<const double> x, std::span<const double> y, double beta,
                               PermutationKind kind) {
  detail::check_pair(x, y, "fgw_1d_objective");
  detail::check_beta(beta, "fgw_1d_objective");
  const std::size_t n = x.size();
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - detail::matched(y, kind, i);
    w += d * d;
  }
  double gw = 0.0;
  if (beta > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double yi = detail::matched(y, kind, i);
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = x[i] - x[j];
        const double dy = yi - detail::matched(y, kind, j);
        const double e = dx * dx - dy * dy;
        gw += e * e;
      }
    }
    gw *= 2.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return (1.0 - beta) * inv_n * w + beta * inv_n * gw;
}

// Permutation picked by comparing (sum x'_i y'_i + a/8)^2 with
// (sum x'_i y'_{N+1-i} + a/8)^2 on zero-mean translations, a = (1-beta)/beta.
// Ties go to the identity. Needs beta in (0, 1] and sorted inputs.
inline PermutationKind closed_form_rule(std::span<const double> x, std::span<const double> y,
                                        double beta) {
  detail::check_pair(x, y, "closed_form_rule");
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw InvalidInput("closed_form_rule: beta must lie in (0, 1]");
  }
  detail::check_sorted(x, "closed_form_rule");
  detail::check_sorted(y, "closed_form_rule");
  const std::size_t n = x.size();
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  const double a = (1.0 - beta) / beta;
  double same = 0.0;
  double flip = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    same += (x[i] - mx) * (y[i] - my);
    flip += (x[i] - mx) * (y[n - 1 - i] - my);
  }
  const double s = (same + a / 8.0) * (same + a / 8.0);
  const double f = (flip + a / 8.0) * (flip + a / 8.0);
  return s >= f ? PermutationKind::identity : PermutationKind::anti_identity;
}

// Exact 1D FGW between sorted equal-size samples. The optimum is attained at
// the identity or the reversal; both are evaluated and the smaller one is
// kept (ties go to the identity). beta = 0 is plain sorted matching.
inline SliceSolution fgw_1d(std::span<const double> x, std::span<const double> y, double beta) {
  detail::check_pair(x, y, "fgw_1d");
  detail::check_beta(beta, "fgw_1d");
  detail::check_sorted(x, "fgw_1d");
  detail::check_sorted(y, "fgw_1d");
  const double same = fgw_1d_objective(x, y, beta, PermutationKind::identity);
  if (beta == 0.0 || x.size() == 1) return {PermutationKind::identity, same};
  const double flip = fgw_1d_objective(x, y, beta, PermutationKind::anti_identity);
  if (flip < same) return {PermutationKind::anti_identity, flip};
  return {PermutationKind::identity, same};
}

// Minimum of the 1D objective over all N! permutations; inputs need not be
// sorted. Refuses N > 8.
inline double brute_force_fgw_1d(std::span<const double> x, std::span<const double> y,
                                 double beta) {
  detail::check_pair(x, y, "brute_force_fgw_1d");
  detail::check_beta(beta, "brute_force_fgw_1d");
  if (x.size() > 8) throw InvalidInput("brute_force_fgw_1d: N > 8 is refused");
  const std::size_t n = x.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double w = 0.0;
    double gw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x[i] - y[perm[i]];
      w += d * d;
      for (std::size_t j = 0; j < n; ++j) {
        const double dx = x[i] - x[j];
        const double dy = y[perm[i]] - y[perm[j]];
        const double e = dx * dx - dy * dy;
        gw += e * e;
      }
    }
    const double v = (1.0 - beta) * w / static_cast<double>(n) + beta * gw / static_cast<double>(n);
    best = std::min(best, v);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Value and gradient of the sliced estimate with respect to both point sets.
struct SlicedValueGrad {
  double value = 0.0;
  double w_term = 0.0;  // Wasserstein part of `value`, filled with the gradient

  Matrix d_x;
  Matrix d_y;
};

namespace detail {

inline std::vector<Index> stable_order(const Vector& v) {
  std::vector<Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index i, Index j) { return v(i) < v(j); });
  return idx;
}

// Averages the per-slice 1D FGW over paired directions: slice l projects x on
// px.row(l) and y on py.row(l). With `grad` the gradient is taken with every
// slice's matching held fixed.
inline SlicedValueGrad sliced_impl(const Matrix& x, const Matrix& y, double beta,
                                   const ProjectionSet& px, const ProjectionSet& py, bool grad,
                                   const char* who) {
  check_beta(beta, who);
  if (x.rows() < 1 || x.rows() != y.rows()) {
    throw InvalidInput(std::string(who) + ": point sets must be nonempty and of equal size (" +
                       std::to_string(x.rows()) + " vs " + std::to_string(y.rows()) + ")");
  }
  if (px.dim() != x.cols() || py.dim() != y.cols()) {
    throw InvalidInput(std::string(who) + ": projection dimension does not match the data");
  }
  if (px.count() < 1 || px.count() != py.count()) {
    throw InvalidInput(std::string(who) + ": projection sets must be nonempty and equal in count");
  }
  const Index n = x.rows();
  const Index slices = px.count();
  const Matrix proj_x = x * px.directions.transpose();  // n x L
  const Matrix proj_y = y * py.directions.transpose();

  SlicedValueGrad out;
  if (grad) {
    out.d_x = Matrix::Zero(x.rows(), x.cols());
    out.d_y = Matrix::Zero(y.rows(), y.cols());
  }
  std::vector<double> xs(static_cast<std::size_t>(n));
  std::vector<double> ys(static_cast<std::size_t>(n));
  Vector gx(n);
  Vector gy(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_l = 1.0 / static_cast<double>(slices);
  double total = 0.0;
  double w_total = 0.0;
  for (Index l = 0; l < slices; ++l) {
    const Vector cx = proj_x.col(l);
    const Vector cy = proj_y.col(l);
    const std::vector<Index> ox = stable_order(cx);
    const std::vector<Index> oy = stable_order(cy);
    for (Index i = 0; i < n; ++i) {
      xs[static_cast<std::size_t>(i)] = cx(ox[static_cast<std::size_t>(i)]);
      ys[static_cast<std::size_t>(i)] = cy(oy[static_cast<std::size_t>(i)]);
    }
    const SliceSolution sol = fgw_1d(xs, ys, beta);
    total += sol.value;
    if (!grad) continue;

    // Gradient of the slice objective in sorted coordinates; ym[i] is the
    // y value matched to xs[i].
    auto ym = [&](Index i) {
      return matched(ys, sol.permutation_kind, static_cast<std::size_t>(i));
    };
    for (Index i = 0; i < n; ++i) {
      const double xi = xs[static_cast<std::size_t>(i)];
      const double yi = ym(i);
      const double w = 2.0 * (1.0 - beta) * inv_n * (xi - yi);
      double sx = 0.0;
      double sy = 0.0;
      if (beta > 0.0) {
        for (Index j = 0; j < n; ++j) {
          const double dx = xi - xs[static_cast<std::size_t>(j)];
          const double dy = yi - ym(j);
          const double e = dx * dx - dy * dy;
          sx += e * dx;
          sy += e * dy;
        }
      }
      w_total += (1.0 - beta) * inv_n * (xi - yi) * (xi - yi);
      gx(i) = w + 8.0 * beta * inv_n * sx;
      gy(i) = -w - 8.0 * beta * inv_n * sy;
    }
    const Vector theta_x = px.directions.row(l).transpose();
    const Vector theta_y = py.directions.row(l).transpose();
    for (Index i = 0; i < n; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const std::size_t sj = sol.permutation_kind == PermutationKind::identity
                                 ? si
                                 : static_cast<std::size_t>(n - 1 - i);
      out.d_x.row(ox[si]) += (inv_l * gx(i)) * theta_x.transpose();
      out.d_y.row(oy[sj]) += (inv_l * gy(i)) * theta_y.transpose();
    }
  }
  out.value = total * inv_l;
  out.w_term = w_total * inv_l;
  return out;
}

}  // namespace detail

// Average of the exact 1D FGW over the projected, sorted samples. beta = 0 is
// the sliced Wasserstein distance.
inline double sliced_fgw(const PointCloud& x, const PointCloud& y, double beta,
                         const ProjectionSet& projections) {
  return detail::sliced_impl(x.samples(), y.samples(), beta, projections, projections, false,
                             "sliced_fgw")
      .value;
}

// Sliced GW between clouds of possibly different dimension: slice l projects
// x on px.row(l) and y on py.row(l).
inline double sliced_gw(const PointCloud& x, const PointCloud& y, const ProjectionSet& px,
                        const ProjectionSet& py) {
  return detail::sliced_impl(x.samples(), y.samples(), 1.0, px, py, false, "sliced_gw").value;
}

// Sliced FGW value with its gradient at fixed per-slice matchings. px and py
// may differ only when beta = 1.
inline SlicedValueGrad sliced_fgw_with_grad(const Matrix& x, const Matrix& y, double beta,
                                            const ProjectionSet& px, const ProjectionSet& py) {
  if (beta < 1.0 && (px.dim() != py.dim() || px.directions != py.directions)) {
    throw InvalidInput("sliced_fgw_with_grad: beta < 1 needs one shared projection set");
  }
  return detail::sliced_impl(x, y, beta, px, py, true, "sliced_fgw_with_grad");
}

}  // namespace relreg
