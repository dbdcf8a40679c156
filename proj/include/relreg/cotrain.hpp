#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relreg/classifier.hpp"
#include "relreg/error.hpp"
#include "relreg/gaussian_ot.hpp"
#include "relreg/point_cloud.hpp"
#include "relreg/rae.hpp"
#include "relreg/rng.hpp"
#include "relreg/sliced_ot.hpp"

namespace relreg {

struct CoTrainConfig {
  TrainConfig view_a;
  TrainConfig view_b;
  double gamma = 1.0;
  double tau = 0.5;
  EncoderKind mode = EncoderKind::probabilistic;
  std::uint64_t seed = 0;
  // Relational term settings: solver for the probabilistic mode, slice
  // count for the deterministic one.
  int outer_iters = 20;
  int inner_sinkhorn_iters = 50;
  double alpha_scale = 0.1;
  int projections = 50;

  FgwSolverOpts relational_opts() const {
    FgwSolverOpts o;
    o.outer_iters = outer_iters;
    o.inner_sinkhorn_iters = inner_sinkhorn_iters;
    o.alpha_scale = alpha_scale;
    o.seed = seed;
    return o;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw InvalidInput("CoTrainConfig: " + what); };
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail("gamma must be >= 0");
    if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must lie in [0, 1]");
    if (outer_iters < 1 || inner_sinkhorn_iters < 1) fail("solver iteration counts must be >= 1");
    if (!(alpha_scale > 0.0)) fail("alpha_scale must be > 0");
    if (projections < 1) fail("projections must be >= 1");
    if (view_a.epochs != view_b.epochs) fail("both views must train for the same number of epochs");
    view_a.validate();
    view_b.validate();
  }
};

// The per-view settings actually used: a fixed single standard-normal
// prior, a pure Wasserstein prior term and the shared gamma.
inline TrainConfig cotrain_view_config(const TrainConfig& view, double gamma) {
  TrainConfig c = view;
  c.gamma = gamma;
  c.beta = 0.0;
  c.components = 1;
  c.prior_init = PriorInit::standard_normal;
  c.learn_prior = false;
  return c;
}

struct CoTrainReport {
  TrainReport view_a;  // reg_value holds the prior term of each view
  TrainReport view_b;
  std::vector<double> relational;  // mean relational GW value per epoch
  double initial_relational = 0.0; // same quantity before any update
};

struct CoTrainResult {
  RaeModel model_a;
  RaeModel model_b;
  CoTrainReport report;
};

// Loss pieces of one paired batch at fixed parameters.
struct CoTrainLoss {
  double recon_a = 0.0;
  double recon_b = 0.0;
  double prior_a = 0.0;
  double prior_b = 0.0;
  double relational = 0.0;
  double prior_weight = 0.0;       // gamma (1 - tau)
  double relational_weight = 0.0;  // 2 gamma tau

  double regularizer() const {
    return prior_weight * (prior_a + prior_b) + relational_weight * relational;
  }
  double total() const { return recon_a + recon_b + regularizer(); }
};

namespace detail {

struct RelationalStreams {
  RngStream proj_a, proj_b;
  explicit RelationalStreams(std::uint64_t seed, std::uint64_t salt = 0)
      : proj_a(RngStream(seed, StreamId::projections).split(2 * salt)),
        proj_b(RngStream(seed, StreamId::projections).split(2 * salt + 1)) {}
};

// Adds weight * GW(q_a, q_b) to both passes and returns the GW value.
inline double add_relational(ViewPass& a, ViewPass& b, EncoderKind mode, double weight,
                             const CoTrainConfig& cfg, RelationalStreams& rs) {
  if (mode == EncoderKind::probabilistic) {
    const GaussianMixture qa = posterior_mixture(a);
    const GaussianMixture qb = posterior_mixture(b);
    const FgwResult r = hierarchical_fgw(qa, qb, 1.0, cfg.relational_opts());
    const FrozenPlanGradient g = hfgw_frozen_gradient(qa, qb, r.plan.coupling(), 1.0);
    a.d_mean += weight * g.d_mean_p;
    a.d_std += weight * g.d_std_p;
    b.d_mean += weight * g.d_mean_q;
    b.d_std += weight * g.d_std_q;
    return g.value;
  }
  const ProjectionSet pa = sample_projections(a.z.cols(), cfg.projections, rs.proj_a);
  const ProjectionSet pb = sample_projections(b.z.cols(), cfg.projections, rs.proj_b);
  const SlicedValueGrad g = sliced_fgw_with_grad(a.z, b.z, 1.0, pa, pb);
  a.d_z += weight * g.d_x;
  b.d_z += weight * g.d_y;
  return g.value;
}

struct PairedPass {
  ViewPass a, b;
  CoTrainLoss loss;
};

inline PairedPass cotrain_pass(const CoTrainConfig& cfg, const TrainConfig& ca,
                               const TrainConfig& cb, const RaeModel& ma, const RaeModel& mb,
                               const Matrix& xa, const Matrix& xb, ViewStreams& sa,
                               ViewStreams& sb, RelationalStreams& rs) {
  PairedPass p{view_forward(ma, xa, sa.noise), view_forward(mb, xb, sb.noise), {}};
  p.loss.prior_weight = cfg.gamma * (1.0 - cfg.tau);
  p.loss.relational_weight = 2.0 * cfg.gamma * cfg.tau;
  p.loss.recon_a = p.a.recon;
  p.loss.recon_b = p.b.recon;
  if (p.loss.prior_weight > 0.0) {
    add_prior_regularizer(p.a, ma, p.loss.prior_weight, 0.0, ca, sa.prior_sample, sa.projections);
    add_prior_regularizer(p.b, mb, p.loss.prior_weight, 0.0, cb, sb.prior_sample, sb.projections);
    p.loss.prior_a = p.a.reg;
    p.loss.prior_b = p.b.reg;
  }
  if (p.loss.relational_weight > 0.0) {
    p.loss.relational = add_relational(p.a, p.b, cfg.mode, p.loss.relational_weight, cfg, rs);
  }
  return p;
}

inline void check_cotrain_inputs(const CoTrainConfig& cfg, const PointCloud& a,
                                 const PointCloud& b) {
  cfg.validate();
  if (a.empty() || b.empty()) throw InvalidInput("cotrain: empty view");
}

}  // namespace detail

// Loss of one paired batch at the given parameters; random draws come from
// streams keyed on `seed`.
inline CoTrainLoss cotrain_loss(const CoTrainConfig& cfg, const RaeModel& model_a,
                                const RaeModel& model_b, const Matrix& xa, const Matrix& xb,
                                std::uint64_t seed) {
  cfg.validate();
  if (xa.rows() != xb.rows()) throw InvalidInput("cotrain_loss: batches differ in size");
  const TrainConfig ca = cotrain_view_config(cfg.view_a, cfg.gamma);
  const TrainConfig cb = cotrain_view_config(cfg.view_b, cfg.gamma);
  detail::ViewStreams sa(seed);
  detail::ViewStreams sb(RngStream(seed, StreamId::noise).split(1).next_u64());
  detail::RelationalStreams rs(seed);
  return detail::cotrain_pass(cfg, ca, cb, model_a, model_b, xa, xb, sa, sb, rs).loss;
}

// Two autoencoders trained jointly on unpaired views: each view shuffles
// independently, paired batches are truncated to the smaller batch size and
// an epoch covers the smaller view once.
inline CoTrainResult cotrain(const CoTrainConfig& cfg, const PointCloud& data_a,
                             const PointCloud& data_b) {
  detail::check_cotrain_inputs(cfg, data_a, data_b);
  const TrainConfig ca = cotrain_view_config(cfg.view_a, cfg.gamma);
  const TrainConfig cb = cotrain_view_config(cfg.view_b, cfg.gamma);
  RaeModel ma = make_rae_model(cfg.mode, data_a.dim(), ca);
  RaeModel mb = make_rae_model(cfg.mode, data_b.dim(), cb);
  AdamState adam_a(ma.parameter_count(), ca.adam);
  AdamState adam_b(mb.parameter_count(), cb.adam);
  detail::ViewStreams sa(ca.seed);
  detail::ViewStreams sb(cb.seed);
  detail::RelationalStreams rs(cfg.seed);
  CoTrainReport report;

  const Index na = data_a.size();
  const Index nb = data_b.size();
  const Index n = std::min(na, nb);
  const Index bs = std::min(ca.batch_size, cb.batch_size);
  std::vector<Index> order_a(static_cast<std::size_t>(na));
  std::vector<Index> order_b(static_cast<std::size_t>(nb));
  std::iota(order_a.begin(), order_a.end(), Index{0});
  std::iota(order_b.begin(), order_b.end(), Index{0});
  auto batch = [](const PointCloud& d, const std::vector<Index>& order, Index begin, Index count) {
    return detail::gather_rows(
        d.samples(), std::span<const Index>(order).subspan(static_cast<std::size_t>(begin),
                                                           static_cast<std::size_t>(count)));
  };

  if (cfg.tau > 0.0 && cfg.gamma > 0.0) {
    // Relational value before training, on its own streams so the training
    // draws are unaffected.
    detail::ViewStreams ea(RngStream(cfg.seed, StreamId::noise).split(1).next_u64());
    detail::ViewStreams eb(RngStream(cfg.seed, StreamId::noise).split(2).next_u64());
    detail::RelationalStreams er(cfg.seed, 1);
    double sum = 0.0;
    int count = 0;
    for (Index begin = 0; begin < n; begin += bs) {
      const Index len = std::min<Index>(n, begin + bs) - begin;
      try {
        sum += detail::cotrain_pass(cfg, ca, cb, ma, mb, batch(data_a, order_a, begin, len),
                                    batch(data_b, order_b, begin, len), ea, eb, er)
                   .loss.relational;
        ++count;
      } catch (const SolverDegenerate&) {
      }
    }
    report.initial_relational = count > 0 ? sum / count : 0.0;
  }

  for (int epoch = 1; epoch <= ca.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    sa.shuffle.shuffle(std::span<Index>(order_a));
    sb.shuffle.shuffle(std::span<Index>(order_b));
    EpochRecord ra, rb;
    ra.epoch = rb.epoch = epoch;
    double recon_a = 0.0, recon_b = 0.0, rel = 0.0;
    Index seen = 0;
    int good = 0;
    int batch_no = 0;
    for (Index begin = 0; begin < n; begin += bs, ++batch_no) {
      const Index len = std::min<Index>(n, begin + bs) - begin;
      detail::PairedPass p;
      try {
        p = detail::cotrain_pass(cfg, ca, cb, ma, mb, batch(data_a, order_a, begin, len),
                                 batch(data_b, order_b, begin, len), sa, sb, rs);
      } catch (const SolverDegenerate& e) {
        ++ra.skipped_batches;
        ++rb.skipped_batches;
        report.view_a.diagnostics.push_back("epoch " + std::to_string(epoch) + " batch " +
                                            std::to_string(batch_no) + ": " + e.what());
        continue;
      }
      if (!std::isfinite(p.loss.total())) {
        throw SolverDegenerate("cotrain: non-finite loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch_no));
      }
      detail::apply_step(ma, adam_a, detail::view_backward(ma, p.a, false));
      detail::apply_step(mb, adam_b, detail::view_backward(mb, p.b, false));
      recon_a += p.loss.recon_a * static_cast<double>(len);
      recon_b += p.loss.recon_b * static_cast<double>(len);
      seen += len;
      ra.reg_value += p.loss.prior_a;
      ra.w_term += p.a.w_term;
      rb.reg_value += p.loss.prior_b;
      rb.w_term += p.b.w_term;
      rel += p.loss.relational;
      ++good;
    }
    if (seen > 0) {
      ra.recon_loss = recon_a / static_cast<double>(seen);
      rb.recon_loss = recon_b / static_cast<double>(seen);
    }
    if (good > 0) {
      ra.reg_value /= good;
      ra.w_term /= good;
      rb.reg_value /= good;
      rb.w_term /= good;
      rel /= good;
    }
    ra.seconds = rb.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.view_a.skipped_batches += ra.skipped_batches;
    report.view_b.skipped_batches += rb.skipped_batches;
    report.view_a.epochs.push_back(ra);
    report.view_b.epochs.push_back(rb);
    report.relational.push_back(rel);
  }
  return CoTrainResult{std::move(ma), std::move(mb), std::move(report)};
}

// Test accuracy of softmax regression on the concatenated codes of the two
// views; rows of the two views must be paired.
inline double eval_multiview(const RaeModel& model_a, const RaeModel& model_b,
                             const PointCloud& data_a, const PointCloud& data_b,
                             std::span<const int> labels, std::uint64_t split_seed,
                             const SoftmaxOpts& opts = {}) {
  if (data_a.size() != data_b.size() || data_a.size() != static_cast<Index>(labels.size())) {
    throw InvalidInput("eval_multiview: views and labels must have the same number of rows");
  }
  const Matrix za = encode(model_a, data_a.samples());
  const Matrix zb = encode(model_b, data_b.samples());
  Matrix features(za.rows(), za.cols() + zb.cols());
  features << za, zb;
  return classify_codes(features, labels, split_seed, opts);
}

}  // namespace relreg
