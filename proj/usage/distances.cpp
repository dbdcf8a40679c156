// Computes the distance family on small synthetic inputs.
#include <cstdio>

#include "relreg/gaussian_ot.hpp"
#include "relreg/ot_core.hpp"
#include "relreg/sliced_ot.hpp"
#include "relreg/synth.hpp"

using namespace relreg;

int main() {
  const PointCloud x = gen_clusters(3, 20, 2, 0.3, 1);
  const PointCloud y = gen_clusters(3, 20, 2, 0.5, 2);

  for (double beta : {0.0, 0.1, 0.5, 1.0}) {
    const FgwResult r = empirical_fgw(x, y, beta);
    std::printf("discrete FGW  beta=%.1f  value=%.6f  (%d outer iterations)\n", beta, r.value,
                r.outer_iterations);
  }

  const ProjectionSet proj = sample_projections(2, 50, 7);
  std::printf("sliced FGW    beta=0.1  value=%.6f\n", sliced_fgw(x, y, 0.1, proj));

  // Gaussian mixtures of different dimension can be compared with GW.
  const GaussianMixture p = GaussianMixture::from_rows(
      (Matrix(3, 2) << 0, 0, 3, 0, 0, 3).finished(), Matrix::Constant(3, 2, 0.5));
  const GaussianMixture q = GaussianMixture::from_rows(
      (Matrix(3, 3) << 0, 0, 1, 3, 0, 1, 0, 3, 1).finished(), Matrix::Constant(3, 3, 0.5));
  // The solver is local: from the product plan the symmetric pair of
  // components stays mixed, while the identity start finds the exact match.
  FgwSolverOpts opts;
  std::printf("hierarchical GW (2D vs 3D) from product plan:  %.6g\n",
              hierarchical_fgw(p, q, 1.0, opts).value);
  opts.warm_start = WarmStart::identity;
  const FgwResult h = hierarchical_fgw(p, q, 1.0, opts);
  std::printf("hierarchical GW (2D vs 3D) from identity plan: %.6g\n", h.value);
  std::printf("plan:\n");
  for (Index i = 0; i < h.plan.coupling().rows(); ++i) {
    for (Index j = 0; j < h.plan.coupling().cols(); ++j) std::printf(" %.4f", h.plan.coupling()(i, j));
    std::printf("\n");
  }
  return 0;
}
