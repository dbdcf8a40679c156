#pragma once

#include <Eigen/Dense>

namespace acceptance {

struct SinkhornW2 {
  double w2 = 0.0;
  double marginal_error = 0.0;
};

// Entropic W2 between two equal-weight samples with annealed epsilon; the
// samples are centred first and the squared mean gap added back. Built in its
// own translation unit with host-specific vector instructions.
SinkhornW2 sample_sinkhorn_w2(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                              double eps_final);

}  // namespace acceptance
