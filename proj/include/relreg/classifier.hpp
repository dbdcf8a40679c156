#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "relreg/error.hpp"
#include "relreg/nn.hpp"
#include "relreg/point_cloud.hpp"
#include "relreg/rng.hpp"

namespace relreg {

struct SoftmaxOpts {
  int epochs = 500;
  double lr = 0.1;
  double l2 = 1e-4;
};

// Multinomial logistic regression on standardized features, full-batch Adam.
class SoftmaxRegression {
 public:
  void fit(const Matrix& x, std::span<const int> y, int classes, const SoftmaxOpts& opts,
           const Matrix* x_val = nullptr, std::span<const int> y_val = {}) {
    if (x.rows() != static_cast<Index>(y.size()) || x.rows() == 0) {
      throw InvalidInput("SoftmaxRegression::fit: feature and label counts differ");
    }
    mean_ = x.colwise().mean();
    scale_ = ((x.rowwise() - mean_).array().square().colwise().mean().sqrt()).matrix();
    for (Index j = 0; j < scale_.size(); ++j) {
      if (!(scale_(j) > 1e-12)) scale_(j) = 1.0;
    }
    const Matrix z = standardize(x);
    const Index f = z.cols();
    w_ = Matrix::Zero(classes, f);
    b_ = Vector::Zero(classes);
    Matrix onehot = Matrix::Zero(x.rows(), classes);
    for (std::size_t i = 0; i < y.size(); ++i) onehot(static_cast<Index>(i), y[i]) = 1.0;

    AdamConfig cfg;
    cfg.lr = opts.lr;
    cfg.beta1 = 0.9;
    AdamState adam(w_.size() + b_.size(), cfg);
    Vector params(w_.size() + b_.size());
    params << w_.reshaped(), b_;
    Matrix best_w = w_;
    Vector best_b = b_;
    double best_acc = -1.0;
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (int e = 0; e < opts.epochs; ++e) {
      const Matrix p = probabilities_std(z);
      const Matrix d = (p - onehot) * inv_n;  // n x C
      Matrix gw = d.transpose() * z + opts.l2 * w_;
      Vector gb = d.colwise().sum().transpose();
      Vector g(params.size());
      g << gw.reshaped(), gb;
      adam_step(adam, params, g);
      w_.reshaped() = params.head(w_.size());
      b_ = params.tail(b_.size());
      if (x_val != nullptr && x_val->rows() > 0) {
        const double acc = accuracy(*x_val, y_val);
        if (acc >= best_acc) {
          best_acc = acc;
          best_w = w_;
          best_b = b_;
        }
      }
    }
    if (x_val != nullptr && x_val->rows() > 0) {
      w_ = best_w;
      b_ = best_b;
    }
  }

  std::vector<int> predict(const Matrix& x) const {
    const Matrix s = scores(standardize(x));
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
      Index k = 0;
      s.row(i).maxCoeff(&k);
      out[static_cast<std::size_t>(i)] = static_cast<int>(k);
    }
    return out;
  }

  double accuracy(const Matrix& x, std::span<const int> y) const {
    if (x.rows() != static_cast<Index>(y.size())) {
      throw InvalidInput("SoftmaxRegression::accuracy: feature and label counts differ");
    }
    if (y.empty()) return 0.0;
    const std::vector<int> p = predict(x);
    int hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hit += p[i] == y[i];
    return static_cast<double>(hit) / static_cast<double>(y.size());
  }

 private:
  Matrix standardize(const Matrix& x) const {
    return ((x.rowwise() - mean_).array().rowwise() / scale_.array()).matrix();
  }
  Matrix scores(const Matrix& z) const {
    Matrix s = z * w_.transpose();
    s.rowwise() += b_.transpose();
    return s;
  }
  Matrix probabilities_std(const Matrix& z) const {
    Matrix s = scores(z);
    for (Index i = 0; i < s.rows(); ++i) {
      const double m = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - m).exp().matrix();
      s.row(i) /= s.row(i).sum();
    }
    return s;
  }

  Eigen::RowVectorXd mean_;
  Eigen::RowVectorXd scale_;
  Matrix w_;
  Vector b_;
};

// Shuffles the rows with `split_seed`, trains on the first 80%, selects the
// epoch by accuracy on the next 10% and returns accuracy on the last 10%.
inline double classify_codes(const Matrix& features, std::span<const int> labels,
                             std::uint64_t split_seed, const SoftmaxOpts& opts = {}) {
  const Index n = features.rows();
  if (n != static_cast<Index>(labels.size())) {
    throw InvalidInput("classify_codes: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(n) + " samples");
  }
  const Index n_train = (8 * n) / 10;
  const Index n_val = n / 10;
  const Index n_test = n - n_train - n_val;
  if (n_val < 1 || n_test < 1) throw InvalidInput("classify_codes: too few samples to split");
  for (int l : labels) {
    if (l < 0) throw InvalidInput("classify_codes: labels must be >= 0");
  }
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  RngStream rng(split_seed, StreamId::split);
  rng.shuffle(std::span<Index>(order));
  auto take = [&](Index from, Index count, Matrix& x, std::vector<int>& y) {
    x.resize(count, features.cols());
    y.resize(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
      const Index r = order[static_cast<std::size_t>(from + i)];
      x.row(i) = features.row(r);
      y[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(r)];
    }
  };
  Matrix xtr, xva, xte;
  std::vector<int> ytr, yva, yte;
  take(0, n_train, xtr, ytr);
  take(n_train, n_val, xva, yva);
  take(n_train + n_val, n_test, xte, yte);
  SoftmaxRegression clf;
  clf.fit(xtr, ytr, classes, opts, &xva, yva);
  return clf.accuracy(xte, yte);
}

}  // namespace relreg
