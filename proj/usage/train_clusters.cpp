// Trains both autoencoders on three Gaussian blobs and inspects the prior.
#include <cstdio>

#include "relreg/rae.hpp"
#include "relreg/synth.hpp"

using namespace relreg;

int main() {
  const PointCloud data = gen_clusters(3, 200, 2, 0.3, 0);

  TrainConfig cfg;
  cfg.components = 3;
  cfg.epochs = 100;
  cfg.seed = 0;

  const TrainResult p = train_prae(cfg, data);
  const std::vector<int> groups = transport_assignment(p.model, data, cfg.beta, cfg.solver_opts());
  std::printf("probabilistic: recon %.4f -> %.4f, purity %.3f\n",
              p.report.epochs.front().recon_loss, p.report.epochs.back().recon_loss,
              cluster_purity(groups, data.labels()));

  cfg.prior_init_log_var = -6.0;
  const TrainResult d = train_drae(cfg, data);
  std::printf("deterministic: recon %.4f -> %.4f\n", d.report.epochs.front().recon_loss,
              d.report.epochs.back().recon_loss);
  const Matrix centers = cluster_centers(3, 2, 3.0);
  for (Index k = 0; k < d.model.prior.size(); ++k) {
    const PointCloud g = conditional_generate(d.model.decoder, d.model.prior, k, 100, 1);
    std::printf("  component %ld: concentration %.2f\n", static_cast<long>(k),
                nearest_centroid_concentration(g.samples(), centers));
  }
  return 0;
}
