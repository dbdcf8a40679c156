#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relreg/error.hpp"

namespace relreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// N samples in M dimensions, one sample per row, with optional integer labels.
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(Matrix samples, std::vector<int> labels = {})
      : samples_(std::move(samples)), labels_(std::move(labels)) {
    if (!samples_.allFinite()) {
      throw InvalidInput("PointCloud: non-finite sample entry");
    }
    if (!labels_.empty() &&
        static_cast<Index>(labels_.size()) != samples_.rows()) {
      throw InvalidInput("PointCloud: " + std::to_string(labels_.size()) +
                         " labels for " + std::to_string(samples_.rows()) +
                         " samples");
    }
  }

  Index size() const noexcept { return samples_.rows(); }
  Index dim() const noexcept { return samples_.cols(); }
  bool empty() const noexcept { return samples_.rows() == 0; }

  const Matrix& samples() const noexcept { return samples_; }
  auto row(Index i) const { return samples_.row(i); }

  bool has_labels() const noexcept { return !labels_.empty(); }
  std::span<const int> labels() const noexcept { return labels_; }

  // Rows picked by `indices`, labels carried along.
  PointCloud select(std::span<const Index> indices) const {
    Matrix out(static_cast<Index>(indices.size()), dim());
    std::vector<int> lab;
    if (has_labels()) lab.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      out.row(static_cast<Index>(r)) = samples_.row(indices[r]);
      if (has_labels()) lab.push_back(labels_[static_cast<std::size_t>(indices[r])]);
    }
    return PointCloud(std::move(out), std::move(lab));
  }

 private:
  Matrix samples_;
  std::vector<int> labels_;
};

}  // namespace relreg
