#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "relreg/error.hpp"
#include "relreg/point_cloud.hpp"
#include "relreg/rng.hpp"

namespace relreg {

// Blob centers: evenly spaced on a circle in the first two coordinates with
// adjacent centers `separation` apart, or on a line when dim = 1.
inline Matrix cluster_centers(int k, Index dim, double separation) {
  Matrix c = Matrix::Zero(k, dim);
  if (k == 1) return c;
  if (dim == 1) {
    for (int i = 0; i < k; ++i) c(i, 0) = (i - 0.5 * (k - 1)) * separation;
    return c;
  }
  const double radius = separation / (2.0 * std::sin(std::numbers::pi / k));
  for (int i = 0; i < k; ++i) {
    const double t = 2.0 * std::numbers::pi * i / k;
    c(i, 0) = radius * std::cos(t);
    c(i, 1) = radius * std::sin(t);
  }
  return c;
}

// K Gaussian blobs of `per_cluster` points each, isotropic std `spread`.
// Rows are grouped by blob and labelled with the blob index.
inline PointCloud gen_clusters(int k, int per_cluster, Index dim, double spread,
                               std::uint64_t seed, double separation = 3.0) {
  if (k < 1 || per_cluster < 1 || dim < 1) {
    throw InvalidInput("gen_clusters: K, n and dimension must be >= 1");
  }
  if (!(spread > 0.0) || !(separation > 0.0)) {
    throw InvalidInput("gen_clusters: spread and separation must be positive");
  }
  RngStream rng(seed, StreamId::data);
  const Matrix centers = cluster_centers(k, dim, separation);
  Matrix x(static_cast<Index>(k) * per_cluster, dim);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(x.rows()));
  Index row = 0;
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < per_cluster; ++i, ++row) {
      for (Index d = 0; d < dim; ++d) x(row, d) = centers(c, d) + spread * rng.normal();
      labels.push_back(c);
    }
  }
  return PointCloud(std::move(x), std::move(labels));
}

struct TwoViewData {
  PointCloud view_a;  // 2D
  PointCloud view_b;  // 3D
  std::vector<int> labels;
};

// Shared 2D latent drawn from three blobs (labels assigned round-robin).
// View A is a random rotation and anisotropic scaling of the latent, view B
// the saddle lift (u, v) -> (u, v, (u^2 - v^2) / 4); both get isotropic noise.
inline TwoViewData gen_two_view(int n, std::uint64_t seed, double noise = 0.1) {
  if (n < 1) throw InvalidInput("gen_two_view: n must be >= 1");
  if (!(noise >= 0.0)) throw InvalidInput("gen_two_view: noise must be >= 0");
  RngStream rng(seed, StreamId::data);
  const Matrix centers = cluster_centers(3, 2, 3.0);
  const double angle = 2.0 * std::numbers::pi * rng.uniform();
  const double s1 = 0.7 + 0.6 * rng.uniform();
  const double s2 = 0.7 + 0.6 * rng.uniform();
  Matrix map(2, 2);
  map << s1 * std::cos(angle), -s2 * std::sin(angle), s1 * std::sin(angle), s2 * std::cos(angle);

  Matrix a(n, 2);
  Matrix b(n, 3);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i % 3;
    labels[static_cast<std::size_t>(i)] = c;
    const double u = centers(c, 0) + 0.4 * rng.normal();
    const double v = centers(c, 1) + 0.4 * rng.normal();
    Vector lat(2);
    lat << u, v;
    a.row(i) = (map * lat).transpose();
    b(i, 0) = u;
    b(i, 1) = v;
    b(i, 2) = 0.25 * (u * u - v * v);
    for (Index d = 0; d < 2; ++d) a(i, d) += noise * rng.normal();
    for (Index d = 0; d < 3; ++d) b(i, d) += noise * rng.normal();
  }
  return TwoViewData{PointCloud(std::move(a), labels), PointCloud(std::move(b), labels), labels};
}

}  // namespace relreg
