#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relreg/error.hpp"
#include "relreg/gaussian_ot.hpp"
#include "relreg/nn.hpp"
#include "relreg/ot_core.hpp"
#include "relreg/point_cloud.hpp"
#include "relreg/rng.hpp"
#include "relreg/sliced_ot.hpp"

namespace relreg {

enum class EncoderKind { probabilistic, deterministic };
enum class PriorInit { random, standard_normal };

struct TrainConfig {
  double gamma = 1.0;
  double beta = 0.1;
  int components = 10;  // K
  int batch_size = 64;
  int epochs = 50;
  int latent_dim = 2;
  std::vector<int> hidden = {32, 32};
  int projections = 50;  // L, deterministic trainer only
  int outer_iters = 20;  // J, probabilistic trainer only
  int inner_sinkhorn_iters = 50;
  double alpha_scale = 0.1;
  std::uint64_t seed = 0;
  AdamConfig adam;
  bool learn_prior = true;
  PriorInit prior_init = PriorInit::random;
  double prior_init_scale = 1.0;     // std of the random prior means
  double prior_init_log_var = 0.0;   // initial log-variance of every component

  FgwSolverOpts solver_opts() const {
    FgwSolverOpts o;
    o.outer_iters = outer_iters;
    o.inner_sinkhorn_iters = inner_sinkhorn_iters;
    o.alpha_scale = alpha_scale;
    o.seed = seed;
    return o;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw InvalidInput("TrainConfig: " + what); };
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail("gamma must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0, 1]");
    if (components < 1) fail("components must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (epochs < 1) fail("epochs must be >= 1");
    if (latent_dim < 1) fail("latent_dim must be >= 1");
    for (int h : hidden) {
      if (h < 1) fail("hidden widths must be >= 1");
    }
    if (projections < 1) fail("projections must be >= 1");
    if (outer_iters < 1) fail("outer_iters must be >= 1");
    if (inner_sinkhorn_iters < 1) fail("inner_sinkhorn_iters must be >= 1");
    if (!(alpha_scale > 0.0)) fail("alpha_scale must be > 0");
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
        !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.epsilon > 0.0)) {
      fail("invalid Adam settings");
    }
    if (!(prior_init_scale >= 0.0)) fail("prior_init_scale must be >= 0");
    if (!std::isfinite(prior_init_log_var)) fail("prior_init_log_var must be finite");
  }
};

// K diagonal Gaussians with trainable means and log-variances and fixed
// uniform weights.
struct RaePrior {
  Matrix means;     // K x M
  Matrix log_vars;  // K x M

  static RaePrior standard_normal(int k, int dim) {
    return RaePrior{Matrix::Zero(k, dim), Matrix::Zero(k, dim)};
  }

  static RaePrior random(int k, int dim, RngStream& rng, double scale = 1.0,
                         double log_var = 0.0) {
    RaePrior p = standard_normal(k, dim);
    p.log_vars.setConstant(log_var);
    for (Index j = 0; j < p.means.cols(); ++j)
      for (Index i = 0; i < p.means.rows(); ++i) p.means(i, j) = scale * rng.normal();
    return p;
  }

  Index size() const noexcept { return means.rows(); }
  Index dim() const noexcept { return means.cols(); }

  Matrix stds() const {
    return (0.5 * log_vars.array()).exp().matrix().cwiseMax(kStdFloor);
  }

  GaussianMixture mixture() const { return GaussianMixture::from_rows(means, stds()); }

  Index parameter_count() const { return means.size() + log_vars.size(); }

  Vector parameters() const {
    Vector out(parameter_count());
    out << means.reshaped(), log_vars.reshaped();
    return out;
  }

  void set_parameters(const Vector& p) {
    means.reshaped() = p.head(means.size());
    log_vars.reshaped() = p.tail(log_vars.size());
  }
};

// Encoder, decoder and prior. A probabilistic encoder outputs the posterior
// mean followed by the log-variance; a deterministic one outputs the code.
struct RaeModel {
  EncoderKind kind = EncoderKind::probabilistic;
  MlpModel encoder;
  MlpModel decoder;
  RaePrior prior;

  Index latent_dim() const { return decoder.input_dim(); }
  Index data_dim() const { return decoder.output_dim(); }

  Index parameter_count() const {
    return encoder.parameter_count() + decoder.parameter_count() + prior.parameter_count();
  }

  // [encoder | decoder | prior]
  Vector parameters() const {
    Vector out(parameter_count());
    out << encoder.parameters(), decoder.parameters(), prior.parameters();
    return out;
  }

  void set_parameters(const Vector& p) {
    if (p.size() != parameter_count()) {
      throw InvalidInput("RaeModel::set_parameters: wrong parameter count");
    }
    const Index ne = encoder.parameter_count();
    const Index nd = decoder.parameter_count();
    encoder.set_parameters(p.head(ne));
    decoder.set_parameters(p.segment(ne, nd));
    prior.set_parameters(p.tail(prior.parameter_count()));
  }
};

// Fresh model: ReLU hidden layers, linear output layers.
inline RaeModel make_rae_model(EncoderKind kind, Index data_dim, const TrainConfig& cfg) {
  cfg.validate();
  const Index m = cfg.latent_dim;
  std::vector<Index> enc{data_dim};
  std::vector<Activation> enc_act;
  for (int h : cfg.hidden) {
    enc.push_back(h);
    enc_act.push_back(Activation::relu);
  }
  enc.push_back(kind == EncoderKind::probabilistic ? 2 * m : m);
  enc_act.push_back(Activation::identity);
  std::vector<Index> dec{m};
  std::vector<Activation> dec_act;
  for (auto it = cfg.hidden.rbegin(); it != cfg.hidden.rend(); ++it) {
    dec.push_back(*it);
    dec_act.push_back(Activation::relu);
  }
  dec.push_back(data_dim);
  dec_act.push_back(Activation::identity);

  RngStream enc_rng(cfg.seed, StreamId::encoder_init);
  RngStream dec_rng(cfg.seed, StreamId::decoder_init);
  RngStream prior_rng(cfg.seed, StreamId::prior_init);
  RaeModel model{kind, MlpModel(enc, enc_act, enc_rng), MlpModel(dec, dec_act, dec_rng),
                 cfg.prior_init == PriorInit::random
                     ? RaePrior::random(cfg.components, static_cast<int>(m), prior_rng,
                                        cfg.prior_init_scale, cfg.prior_init_log_var)
                     : RaePrior::standard_normal(cfg.components, static_cast<int>(m))};
  return model;
}

struct EpochRecord {
  int epoch = 0;
  double recon_loss = 0.0;  // mean over samples of |x - x_hat|^2
  double reg_value = 0.0;   // mean over batches of the regularizer
  double w_term = 0.0;      // Wasserstein part of reg_value
  double gw_term = 0.0;     // Gromov-Wasserstein part of reg_value
  double seconds = 0.0;
  int skipped_batches = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  Matrix last_plan;  // prior x batch coupling of the last regularized batch
  int skipped_batches = 0;
  std::vector<std::string> diagnostics;

  std::vector<double> recon_series() const {
    std::vector<double> out;
    for (const EpochRecord& e : epochs) out.push_back(e.recon_loss);
    return out;
  }
  std::vector<double> reg_series() const {
    std::vector<double> out;
    for (const EpochRecord& e : epochs) out.push_back(e.reg_value);
    return out;
  }
};

struct TrainResult {
  RaeModel model;
  TrainReport report;
};

namespace detail {

// Forward state of one view on one batch, plus gradients collected from the
// regularizers with respect to the latent quantities and the prior.
struct ViewPass {
  MlpActivations enc;
  MlpActivations dec;
  Matrix mean, std, eps, z;  // probabilistic: posterior and sample; deterministic: z only
  Matrix d_xhat;
  double recon = 0.0;
  Matrix d_mean, d_std;  // probabilistic
  Matrix d_z;            // deterministic
  Vector d_prior;
  double reg = 0.0;
  double w_term = 0.0;
  Matrix plan;
};

inline ViewPass view_forward(const RaeModel& model, const Matrix& x, RngStream& noise) {
  ViewPass p;
  const Index n = x.rows();
  const Index m = model.latent_dim();
  p.enc = mlp_apply(model.encoder, x);
  if (model.kind == EncoderKind::probabilistic) {
    p.mean = p.enc.output.leftCols(m);
    p.std = (0.5 * p.enc.output.rightCols(m).array()).exp().matrix().cwiseMax(kStdFloor);
    p.eps.resize(n, m);
    for (Index i = 0; i < n; ++i)
      for (Index d = 0; d < m; ++d) p.eps(i, d) = noise.normal();
    p.z = p.mean + p.eps.cwiseProduct(p.std);
    p.d_mean = Matrix::Zero(n, m);
    p.d_std = Matrix::Zero(n, m);
  } else {
    p.z = p.enc.output;
    p.d_z = Matrix::Zero(n, m);
  }
  p.dec = mlp_apply(model.decoder, p.z);
  const Matrix diff = p.dec.output - x;
  p.recon = diff.squaredNorm() / static_cast<double>(n);
  p.d_xhat = (2.0 / static_cast<double>(n)) * diff;
  p.d_prior = Vector::Zero(model.prior.parameter_count());
  return p;
}

inline GaussianMixture posterior_mixture(const ViewPass& p) {
  return GaussianMixture::from_rows(p.mean, p.std);
}

// d/dlogvar from d/dstd where std = max(exp(lv / 2), floor).
inline Matrix std_to_log_var_grad(const Matrix& d_std, const Matrix& log_var) {
  Matrix out(d_std.rows(), d_std.cols());
  for (Index j = 0; j < d_std.cols(); ++j) {
    for (Index i = 0; i < d_std.rows(); ++i) {
      const double s = std::exp(0.5 * log_var(i, j));
      out(i, j) = s > kStdFloor ? 0.5 * s * d_std(i, j) : 0.0;
    }
  }
  return out;
}

inline void add_prior_grad(ViewPass& p, const RaePrior& prior, const Matrix& d_means,
                           const Matrix& d_stds, double weight) {
  const Index km = prior.means.size();
  p.d_prior.head(km) += weight * d_means.reshaped();
  p.d_prior.tail(km) += weight * std_to_log_var_grad(d_stds, prior.log_vars).reshaped();
}

// Adds weight * D(prior, posterior) to the pass: hierarchical FGW for a
// probabilistic view, sliced FGW against prior samples for a deterministic one.
inline void add_prior_regularizer(ViewPass& p, const RaeModel& model, double weight, double beta,
                                  const TrainConfig& cfg, RngStream& prior_rng,
                                  RngStream& proj_rng) {
  const RaePrior& prior = model.prior;
  if (model.kind == EncoderKind::probabilistic) {
    const GaussianMixture pm = prior.mixture();
    const GaussianMixture post = posterior_mixture(p);
    const FgwResult r = hierarchical_fgw(pm, post, beta, cfg.solver_opts());
    const FrozenPlanGradient g = hfgw_frozen_gradient(pm, post, r.plan.coupling(), beta);
    p.reg = g.value;
    const GaussianMixture& q = post;
    p.w_term = beta < 1.0 ? (1.0 - beta) *
                                gmm_pairwise_w2(pm, q).entries().cwiseProduct(r.plan.coupling()).sum()
                          : 0.0;
    p.plan = r.plan.coupling();
    p.d_mean += weight * g.d_mean_q;
    p.d_std += weight * g.d_std_q;
    add_prior_grad(p, prior, g.d_mean_p, g.d_std_p, weight);
    return;
  }
  const Index n = p.z.rows();
  const Index m = p.z.cols();
  const Matrix stds = prior.stds();
  std::vector<Index> comp(static_cast<std::size_t>(n));
  Matrix eps(n, m);
  Matrix samples(n, m);
  for (Index i = 0; i < n; ++i) {
    const Index k = static_cast<Index>(prior_rng.uniform_index(static_cast<std::uint64_t>(prior.size())));
    comp[static_cast<std::size_t>(i)] = k;
    for (Index d = 0; d < m; ++d) eps(i, d) = prior_rng.normal();
    samples.row(i) = prior.means.row(k) + eps.row(i).cwiseProduct(stds.row(k));
  }
  const ProjectionSet proj = sample_projections(m, cfg.projections, proj_rng);
  const SlicedValueGrad g = sliced_fgw_with_grad(p.z, samples, beta, proj, proj);
  p.reg = g.value;
  p.w_term = g.w_term;
  p.d_z += weight * g.d_x;
  Matrix d_means = Matrix::Zero(prior.size(), m);
  Matrix d_stds = Matrix::Zero(prior.size(), m);
  for (Index i = 0; i < n; ++i) {
    const Index k = comp[static_cast<std::size_t>(i)];
    d_means.row(k) += g.d_y.row(i);
    d_stds.row(k) += g.d_y.row(i).cwiseProduct(eps.row(i));
  }
  add_prior_grad(p, prior, d_means, d_stds, weight);
}

// Gradient of recon + (collected regularizer terms) in RaeModel::parameters()
// layout. Prior entries are zeroed unless `learn_prior`.
inline Vector view_backward(const RaeModel& model, const ViewPass& p, bool learn_prior) {
  const MlpGradients gd = mlp_grad(model.decoder, p.dec, p.d_xhat);
  Matrix d_enc_out;
  if (model.kind == EncoderKind::probabilistic) {
    const Index m = model.latent_dim();
    const Matrix d_mean = gd.d_input + p.d_mean;
    const Matrix d_std = gd.d_input.cwiseProduct(p.eps) + p.d_std;
    d_enc_out.resize(p.mean.rows(), 2 * m);
    d_enc_out.leftCols(m) = d_mean;
    d_enc_out.rightCols(m) = std_to_log_var_grad(d_std, p.enc.output.rightCols(m));
  } else {
    d_enc_out = gd.d_input + p.d_z;
  }
  const MlpGradients ge = mlp_grad(model.encoder, p.enc, d_enc_out);
  Vector out(model.parameter_count());
  const Vector prior_grad = learn_prior ? p.d_prior : Vector::Zero(p.d_prior.size());
  out << ge.flat(), gd.flat(), prior_grad;
  return out;
}

inline void apply_step(RaeModel& model, AdamState& adam, const Vector& grad) {
  Vector params = model.parameters();
  adam_step(adam, params, grad);
  model.set_parameters(params);
}

inline Matrix gather_rows(const Matrix& x, std::span<const Index> idx) {
  Matrix out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = x.row(idx[i]);
  return out;
}

// Per-view random streams; each purpose has its own.
struct ViewStreams {
  RngStream noise, shuffle, prior_sample, projections;
  explicit ViewStreams(std::uint64_t seed)
      : noise(seed, StreamId::noise),
        shuffle(seed, StreamId::shuffle),
        prior_sample(seed, StreamId::prior_sample),
        projections(seed, StreamId::projections) {}
};

inline TrainResult train_autoencoder(const TrainConfig& cfg, const PointCloud& data,
                                     EncoderKind kind, const char* who) {
  cfg.validate();
  if (data.empty()) throw InvalidInput(std::string(who) + ": empty data");
  RaeModel model = make_rae_model(kind, data.dim(), cfg);
  AdamState adam(model.parameter_count(), cfg.adam);
  ViewStreams streams(cfg.seed);
  TrainReport report;

  const Index n = data.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const bool regularize = cfg.gamma > 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    streams.shuffle.shuffle(std::span<Index>(order));
    EpochRecord rec;
    rec.epoch = epoch;
    double recon_sum = 0.0;
    Index seen = 0;
    int reg_batches = 0;
    int batch_no = 0;
    for (Index begin = 0; begin < n; begin += cfg.batch_size, ++batch_no) {
      const Index end = std::min<Index>(n, begin + cfg.batch_size);
      const Matrix x = gather_rows(
          data.samples(), std::span<const Index>(order).subspan(static_cast<std::size_t>(begin),
                                                                static_cast<std::size_t>(end - begin)));
      ViewPass pass = view_forward(model, x, streams.noise);
      if (regularize) {
        try {
          add_prior_regularizer(pass, model, cfg.gamma, cfg.beta, cfg, streams.prior_sample,
                                streams.projections);
        } catch (const SolverDegenerate& e) {
          ++rec.skipped_batches;
          report.diagnostics.push_back("epoch " + std::to_string(epoch) + " batch " +
                                       std::to_string(batch_no) + ": " + e.what());
          continue;
        }
      }
      const double loss = pass.recon + cfg.gamma * pass.reg;
      if (!std::isfinite(loss)) {
        throw SolverDegenerate(std::string(who) + ": non-finite loss at epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(batch_no));
      }
      apply_step(model, adam, view_backward(model, pass, cfg.learn_prior));
      recon_sum += pass.recon * static_cast<double>(end - begin);
      seen += end - begin;
      if (regularize) {
        rec.reg_value += pass.reg;
        rec.w_term += pass.w_term;
        rec.gw_term += pass.reg - pass.w_term;
        ++reg_batches;
        if (pass.plan.size() > 0) report.last_plan = pass.plan;
      }
    }
    rec.recon_loss = seen > 0 ? recon_sum / static_cast<double>(seen) : 0.0;
    if (reg_batches > 0) {
      rec.reg_value /= reg_batches;
      rec.w_term /= reg_batches;
      rec.gw_term /= reg_batches;
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.skipped_batches += rec.skipped_batches;
    report.epochs.push_back(rec);
  }
  return TrainResult{std::move(model), std::move(report)};
}

}  // namespace detail

// Probabilistic encoder regularized by hierarchical FGW between the batch
// posterior mixture and the learned prior mixture, plan held fixed in the
// backward pass.
inline TrainResult train_prae(const TrainConfig& cfg, const PointCloud& data) {
  return detail::train_autoencoder(cfg, data, EncoderKind::probabilistic, "train_prae");
}

// Deterministic encoder regularized by sliced FGW between the codes and an
// equal number of prior samples, fresh projections every batch.
inline TrainResult train_drae(const TrainConfig& cfg, const PointCloud& data) {
  return detail::train_autoencoder(cfg, data, EncoderKind::deterministic, "train_drae");
}

// Posterior means (probabilistic) or codes (deterministic), one row per sample.
inline Matrix encode(const RaeModel& model, const Matrix& x) {
  const Matrix out = mlp_apply(model.encoder, x).output;
  return model.kind == EncoderKind::probabilistic ? Matrix(out.leftCols(model.latent_dim())) : out;
}

inline Matrix decode(const RaeModel& model, const Matrix& z) {
  return mlp_apply(model.decoder, z).output;
}

// Batch posterior mixture of a probabilistic model over all rows of x.
inline GaussianMixture encode_posterior(const RaeModel& model, const Matrix& x) {
  if (model.kind != EncoderKind::probabilistic) {
    throw InvalidInput("encode_posterior: model has a deterministic encoder");
  }
  const Index m = model.latent_dim();
  const Matrix out = mlp_apply(model.encoder, x).output;
  return GaussianMixture::from_rows(out.leftCols(m),
                                    (0.5 * out.rightCols(m).array()).exp().matrix());
}

// n decoded draws from prior component k.
inline PointCloud conditional_generate(const MlpModel& decoder, const RaePrior& prior, Index k,
                                       Index n, std::uint64_t seed) {
  if (k < 0 || k >= prior.size()) {
    throw InvalidInput("conditional_generate: component " + std::to_string(k) +
                       " out of range (K = " + std::to_string(prior.size()) + ")");
  }
  if (n < 0) throw InvalidInput("conditional_generate: negative count");
  if (decoder.input_dim() != prior.dim()) {
    throw InvalidInput("conditional_generate: decoder input does not match the prior dimension");
  }
  if (n == 0) return PointCloud(Matrix(0, decoder.output_dim()));
  RngStream rng(seed, StreamId::prior_sample);
  const Matrix stds = prior.stds();
  Matrix z(n, prior.dim());
  for (Index i = 0; i < n; ++i)
    for (Index d = 0; d < prior.dim(); ++d)
      z(i, d) = prior.means(k, d) + rng.normal() * stds(k, d);
  return PointCloud(mlp_apply(decoder, z).output);
}

// Each sample goes to the prior component holding most of its mass in the
// optimal plan between the prior and the full-data posterior.
inline std::vector<int> transport_assignment(const RaeModel& model, const PointCloud& data,
                                             double beta, const FgwSolverOpts& opts = {}) {
  const GaussianMixture post = encode_posterior(model, data.samples());
  const Matrix t = hierarchical_fgw(model.prior.mixture(), post, beta, opts).plan.coupling();
  std::vector<int> out(static_cast<std::size_t>(t.cols()));
  for (Index n = 0; n < t.cols(); ++n) {
    Index best = 0;
    t.col(n).maxCoeff(&best);
    out[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

// Fraction of samples whose label is the majority label of their group.
inline double cluster_purity(std::span<const int> groups, std::span<const int> labels) {
  if (groups.size() != labels.size() || groups.empty()) {
    throw InvalidInput("cluster_purity: groups and labels must be nonempty and equal in length");
  }
  std::map<int, std::map<int, int>> counts;
  for (std::size_t i = 0; i < groups.size(); ++i) ++counts[groups[i]][labels[i]];
  int hit = 0;
  for (const auto& [g, by_label] : counts) {
    int best = 0;
    for (const auto& [l, c] : by_label) best = std::max(best, c);
    hit += best;
  }
  return static_cast<double>(hit) / static_cast<double>(groups.size());
}

// Largest fraction of rows of x whose nearest centroid is the same one.
inline double nearest_centroid_concentration(const Matrix& x, const Matrix& centroids) {
  if (x.rows() == 0) return 0.0;
  if (x.cols() != centroids.cols()) {
    throw InvalidInput("nearest_centroid_concentration: dimension mismatch");
  }
  std::vector<int> counts(static_cast<std::size_t>(centroids.rows()), 0);
  for (Index i = 0; i < x.rows(); ++i) {
    Index best = 0;
    (centroids.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    ++counts[static_cast<std::size_t>(best)];
  }
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(x.rows());
}

}  // namespace relreg
