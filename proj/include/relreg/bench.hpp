#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "relreg/error.hpp"
#include "relreg/ot_core.hpp"
#include "relreg/point_cloud.hpp"
#include "relreg/rng.hpp"
#include "relreg/sliced_ot.hpp"

namespace relreg {

struct ScalingOpts {
  std::vector<Index> sizes = {64, 128, 256, 512};
  Index dim = 8;          // M
  int outer_iters = 20;   // J
  int projections = 50;   // L
  double beta = 0.5;
  int repeats = 3;        // the fastest repeat is kept
  std::uint64_t seed = 0;
};

struct ScalingRow {
  Index n = 0;
  double direct_seconds = 0.0;
  double sliced_seconds = 0.0;
  double direct_value = 0.0;
  double sliced_value = 0.0;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  double direct_slope = 0.0;
  double sliced_slope = 0.0;
};

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidInput("loglog_slope: need at least two paired points");
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw InvalidInput("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw InvalidInput("loglog_slope: all x values are equal");
  return sxy / sxx;
}

// Wall-clock comparison of the direct FGW solver (J outer iterations) and
// sliced FGW (L projections) on random clouds of N points in M dimensions.
inline ScalingResult run_scaling_bench(const ScalingOpts& o) {
  if (o.sizes.size() < 2 || o.dim < 1 || o.repeats < 1) {
    throw InvalidInput("run_scaling_bench: need two sizes, dim >= 1 and repeats >= 1");
  }
  ScalingResult out;
  RngStream data(o.seed, StreamId::data);
  FgwSolverOpts solver;
  solver.outer_iters = o.outer_iters;
  solver.inner_tol = 1e-300;  // fixed work per outer iteration
  const ProjectionSet proj = sample_projections(o.dim, o.projections, o.seed);
  for (Index n : o.sizes) {
    if (n < 2) throw InvalidInput("run_scaling_bench: sizes must be >= 2");
    Matrix x(n, o.dim), y(n, o.dim);
    for (Index j = 0; j < o.dim; ++j)
      for (Index i = 0; i < n; ++i) x(i, j) = data.normal();
    for (Index j = 0; j < o.dim; ++j)
      for (Index i = 0; i < n; ++i) y(i, j) = data.normal();
    const PointCloud px(x), py(y);
    ScalingRow row;
    row.n = n;
    row.direct_seconds = row.sliced_seconds = std::numeric_limits<double>::infinity();
    for (int r = 0; r < o.repeats; ++r) {
      auto t0 = std::chrono::steady_clock::now();
      row.direct_value = empirical_fgw(px, py, o.beta, solver).value;
      auto t1 = std::chrono::steady_clock::now();
      row.sliced_value = sliced_fgw(px, py, o.beta, proj);
      auto t2 = std::chrono::steady_clock::now();
      row.direct_seconds =
          std::min(row.direct_seconds, std::chrono::duration<double>(t1 - t0).count());
      row.sliced_seconds =
          std::min(row.sliced_seconds, std::chrono::duration<double>(t2 - t1).count());
    }
    out.rows.push_back(row);
  }
  std::vector<double> ns, dt, st;
  for (const ScalingRow& r : out.rows) {
    ns.push_back(static_cast<double>(r.n));
    dt.push_back(r.direct_seconds);
    st.push_back(r.sliced_seconds);
  }
  out.direct_slope = loglog_slope(ns, dt);
  out.sliced_slope = loglog_slope(ns, st);
  return out;
}

}  // namespace relreg
