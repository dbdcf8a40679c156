#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "relreg/rae.hpp"
#include "relreg/synth.hpp"

using namespace relreg;

namespace {

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.components = 3;
  c.epochs = 4;
  c.batch_size = 16;
  c.hidden = {8};
  c.projections = 10;
  c.outer_iters = 5;
  c.seed = seed;
  return c;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

double variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

Vector network_params(const RaeModel& m) {
  Vector out(m.encoder.parameter_count() + m.decoder.parameter_count());
  out << m.encoder.parameters(), m.decoder.parameters();
  return out;
}

}  // namespace

TEST(RaeConfig, RejectsInvalidSettings) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.beta = 1.5;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = TrainConfig{};
  c.gamma = -1.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = TrainConfig{};
  c.components = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = TrainConfig{};
  c.adam.beta1 = 1.0;
  EXPECT_THROW(c.validate(), InvalidInput);
  EXPECT_THROW(train_prae(TrainConfig{}, PointCloud(Matrix(0, 2))), InvalidInput);
}

TEST(RaeModelTest, ShapesAndParameterLayout) {
  TrainConfig c = small_config(1);
  c.latent_dim = 3;
  const RaeModel p = make_rae_model(EncoderKind::probabilistic, 5, c);
  EXPECT_EQ(p.encoder.output_dim(), 6);
  EXPECT_EQ(p.decoder.input_dim(), 3);
  EXPECT_EQ(p.data_dim(), 5);
  EXPECT_EQ(p.prior.size(), 3);
  const RaeModel d = make_rae_model(EncoderKind::deterministic, 5, c);
  EXPECT_EQ(d.encoder.output_dim(), 3);

  RaeModel q = p;
  Vector params = q.parameters();
  params.array() += 0.5;
  q.set_parameters(params);
  EXPECT_EQ(q.parameters(), params);
  EXPECT_NE(q.encoder.stamp(), p.encoder.stamp());
}

TEST(RaeModelTest, PriorInitOptions) {
  TrainConfig c = small_config(2);
  c.prior_init_log_var = -4.0;
  const RaeModel m = make_rae_model(EncoderKind::deterministic, 2, c);
  EXPECT_TRUE(m.prior.log_vars.isConstant(-4.0));
  EXPECT_FALSE(m.prior.means.isZero());
  c.prior_init = PriorInit::standard_normal;
  const RaeModel s = make_rae_model(EncoderKind::deterministic, 2, c);
  EXPECT_TRUE(s.prior.means.isZero(0.0));
  EXPECT_TRUE(s.prior.log_vars.isZero(0.0));
}

TEST(RaeModelTest, InitDoesNotDependOnProjectionOrSolverSettings) {
  TrainConfig a = small_config(3);
  TrainConfig b = a;
  b.projections = 77;
  b.outer_iters = 9;
  b.beta = 0.7;
  const RaeModel ma = make_rae_model(EncoderKind::deterministic, 2, a);
  const RaeModel mb = make_rae_model(EncoderKind::deterministic, 2, b);
  EXPECT_EQ(ma.parameters(), mb.parameters());
}

// With gamma = 0 the regularizer path never runs, so the network trajectory
// cannot depend on beta, K, L or J.
TEST(RaeTraining, GammaZeroTrajectoryIgnoresRegularizerSettings) {
  const PointCloud data = gen_clusters(3, 20, 2, 0.3, 5);
  for (EncoderKind kind : {EncoderKind::probabilistic, EncoderKind::deterministic}) {
    TrainConfig base = small_config(11);
    base.gamma = 0.0;
    auto run = [&](const TrainConfig& c) {
      return kind == EncoderKind::probabilistic ? train_prae(c, data) : train_drae(c, data);
    };
    const TrainResult ref = run(base);
    for (double r : ref.report.reg_series()) EXPECT_EQ(r, 0.0);
    TrainConfig other = base;
    other.beta = 0.9;
    other.components = 7;
    other.projections = 3;
    other.outer_iters = 2;
    const TrainResult alt = run(other);
    EXPECT_EQ(network_params(ref.model), network_params(alt.model));
    EXPECT_EQ(ref.report.recon_series(), alt.report.recon_series());
  }
}

TEST(RaeTraining, ReportShapeAndFiniteness) {
  const PointCloud data = gen_clusters(3, 20, 2, 0.3, 6);
  const TrainConfig c = small_config(12);
  for (const TrainResult& r : {train_prae(c, data), train_drae(c, data)}) {
    ASSERT_EQ(r.report.epochs.size(), 4u);
    for (std::size_t e = 0; e < r.report.epochs.size(); ++e) {
      const EpochRecord& rec = r.report.epochs[e];
      EXPECT_EQ(rec.epoch, static_cast<int>(e) + 1);
      EXPECT_TRUE(std::isfinite(rec.recon_loss));
      EXPECT_TRUE(std::isfinite(rec.reg_value));
      EXPECT_GE(rec.seconds, 0.0);
      EXPECT_NEAR(rec.w_term + rec.gw_term, rec.reg_value, 1e-12);
    }
    EXPECT_TRUE((r.model.prior.stds().array() >= kStdFloor).all());
    EXPECT_TRUE(r.model.prior.log_vars.allFinite());
  }
}

TEST(RaeTraining, ProbabilisticLastPlanIsCoupling) {
  const PointCloud data = gen_clusters(3, 20, 2, 0.3, 7);
  const TrainResult r = train_prae(small_config(13), data);
  const Matrix& t = r.report.last_plan;
  ASSERT_EQ(t.rows(), 3);
  // 60 rows in batches of 16: the last batch has 12.
  ASSERT_EQ(t.cols(), 12);
  EXPECT_TRUE((t.array() >= 0.0).all());
  EXPECT_TRUE(t.rowwise().sum().isApproxToConstant(1.0 / 3.0, 1e-9));
  EXPECT_TRUE(t.colwise().sum().isApproxToConstant(1.0 / 12.0, 1e-9));
}

TEST(RaeTraining, DeterministicRunsAreReproducible) {
  const PointCloud data = gen_clusters(3, 20, 2, 0.3, 8);
  const TrainConfig c = small_config(14);
  const TrainResult a = train_drae(c, data);
  const TrainResult b = train_drae(c, data);
  EXPECT_EQ(a.model.parameters(), b.model.parameters());
  EXPECT_EQ(a.report.reg_series(), b.report.reg_series());
  TrainConfig d = c;
  d.seed = 15;
  EXPECT_NE(train_drae(d, data).model.parameters(), a.model.parameters());
}

TEST(RaeTraining, PlainAutoencoderLearns) {
  const PointCloud data = gen_clusters(3, 40, 2, 0.3, 9);
  TrainConfig c = small_config(16);
  c.gamma = 0.0;
  c.epochs = 60;
  c.hidden = {16};
  const TrainResult r = train_drae(c, data);
  EXPECT_LT(r.report.epochs.back().recon_loss, 0.5 * r.report.epochs.front().recon_loss);
}

// Finite differences of recon + gamma * D through the whole model, with the
// random draws, the projections and the sorted matching held fixed.
TEST(RaeGradient, DeterministicMatchesFiniteDifferences) {
  RngStream rng(21, 1);
  TrainConfig c = small_config(21);
  c.hidden = {6};
  c.projections = 4;
  c.gamma = 0.7;
  c.beta = 0.3;
  RaeModel model = make_rae_model(EncoderKind::deterministic, 3, c);
  const Matrix x = oracle::random_matrix(rng, 7, 3);
  auto loss_and_grad = [&](const RaeModel& m, Vector* grad) {
    detail::ViewStreams s(99);
    detail::ViewPass p = detail::view_forward(m, x, s.noise);
    detail::add_prior_regularizer(p, m, c.gamma, c.beta, c, s.prior_sample, s.projections);
    if (grad != nullptr) *grad = detail::view_backward(m, p, true);
    return p.recon + c.gamma * p.reg;
  };
  Vector g;
  loss_and_grad(model, &g);
  const Vector p0 = model.parameters();
  const double h = 1e-6;
  int checked = 0;
  for (Index i = 0; i < p0.size(); ++i) {
    RaeModel plus = model, minus = model;
    Vector pp = p0, pm = p0;
    pp(i) += h;
    pm(i) -= h;
    plus.set_parameters(pp);
    minus.set_parameters(pm);
    const double fd = (loss_and_grad(plus, nullptr) - loss_and_grad(minus, nullptr)) / (2 * h);
    if (std::abs(fd) < 1e-7 && std::abs(g(i)) < 1e-7) continue;
    EXPECT_LT(rel_err(fd, g(i)), 1e-4) << "parameter " << i;
    ++checked;
  }
  EXPECT_GT(checked, p0.size() / 2);
}

// Same check for the probabilistic loss with the transport plan frozen at
// the one solved at the base parameters.
TEST(RaeGradient, ProbabilisticFrozenPlanMatchesFiniteDifferences) {
  RngStream rng(22, 1);
  TrainConfig c = small_config(22);
  c.hidden = {6};
  c.gamma = 0.8;
  c.beta = 0.4;
  RaeModel model = make_rae_model(EncoderKind::probabilistic, 3, c);
  const Matrix x = oracle::random_matrix(rng, 6, 3);

  detail::ViewStreams s0(5);
  detail::ViewPass base = detail::view_forward(model, x, s0.noise);
  detail::add_prior_regularizer(base, model, c.gamma, c.beta, c, s0.prior_sample, s0.projections);
  const Vector g = detail::view_backward(model, base, true);
  const Matrix t = base.plan;

  auto frozen_loss = [&](const RaeModel& m) {
    detail::ViewStreams s(5);
    detail::ViewPass p = detail::view_forward(m, x, s.noise);
    const double reg =
        hfgw_frozen_gradient(m.prior.mixture(), detail::posterior_mixture(p), t, c.beta).value;
    return p.recon + c.gamma * reg;
  };
  const Vector p0 = model.parameters();
  const double h = 1e-6;
  int checked = 0;
  for (Index i = 0; i < p0.size(); ++i) {
    RaeModel plus = model, minus = model;
    Vector pp = p0, pm = p0;
    pp(i) += h;
    pm(i) -= h;
    plus.set_parameters(pp);
    minus.set_parameters(pm);
    const double fd = (frozen_loss(plus) - frozen_loss(minus)) / (2 * h);
    if (std::abs(fd) < 1e-7 && std::abs(g(i)) < 1e-7) continue;
    EXPECT_LT(rel_err(fd, g(i)), 1e-4) << "parameter " << i;
    ++checked;
  }
  EXPECT_GT(checked, p0.size() / 2);
}

TEST(RaeGradient, FixedPriorGetsNoGradient) {
  TrainConfig c = small_config(23);
  RaeModel model = make_rae_model(EncoderKind::deterministic, 2, c);
  RngStream rng(23, 1);
  const Matrix x = oracle::random_matrix(rng, 8, 2);
  detail::ViewStreams s(1);
  detail::ViewPass p = detail::view_forward(model, x, s.noise);
  detail::add_prior_regularizer(p, model, 1.0, 0.1, c, s.prior_sample, s.projections);
  const Vector g = detail::view_backward(model, p, false);
  EXPECT_TRUE(g.tail(model.prior.parameter_count()).isZero(0.0));
  EXPECT_FALSE(detail::view_backward(model, p, true).tail(model.prior.parameter_count()).isZero());
}

// More slices average out more of the projection noise.
TEST(RaeSliced, MoreProjectionsReduceEstimatorVariance) {
  TrainConfig c = small_config(24);
  const RaeModel model = make_rae_model(EncoderKind::deterministic, 2, c);
  const PointCloud data = gen_clusters(3, 10, 2, 0.3, 24);
  auto spread = [&](int projections) {
    TrainConfig cc = c;
    cc.projections = projections;
    std::vector<double> vals;
    for (std::uint64_t r = 0; r < 100; ++r) {
      detail::ViewStreams s(1000 + r);
      detail::ViewPass p = detail::view_forward(model, data.samples(), s.noise);
      detail::add_prior_regularizer(p, model, 1.0, cc.beta, cc, s.prior_sample, s.projections);
      vals.push_back(p.reg);
    }
    return variance(vals);
  };
  EXPECT_LT(spread(50), spread(1));
}

TEST(RaeGenerate, EdgeCases) {
  TrainConfig c = small_config(25);
  const RaeModel m = make_rae_model(EncoderKind::deterministic, 4, c);
  const PointCloud empty = conditional_generate(m.decoder, m.prior, 0, 0, 1);
  EXPECT_EQ(empty.size(), 0);
  EXPECT_EQ(empty.dim(), 4);
  EXPECT_THROW(conditional_generate(m.decoder, m.prior, 3, 5, 1), InvalidInput);
  EXPECT_THROW(conditional_generate(m.decoder, m.prior, -1, 5, 1), InvalidInput);
  EXPECT_THROW(conditional_generate(m.decoder, m.prior, 0, -1, 1), InvalidInput);
}

TEST(RaeGenerate, NarrowComponentThroughIdentityDecoder) {
  MlpModel id = MlpModel::zeros({2, 2}, {Activation::identity});
  id.mutable_layer(0).weight = Matrix::Identity(2, 2);
  RaePrior prior = RaePrior::standard_normal(2, 2);
  prior.means << 1.5, -2.0, 0.25, 3.0;
  prior.log_vars.setConstant(-60.0);
  const PointCloud out = conditional_generate(id, prior, 1, 50, 3);
  ASSERT_EQ(out.size(), 50);
  for (Index i = 0; i < out.size(); ++i) {
    EXPECT_NEAR(out.samples()(i, 0), 0.25, 1e-4);
    EXPECT_NEAR(out.samples()(i, 1), 3.0, 1e-4);
  }
  const PointCloud again = conditional_generate(id, prior, 1, 50, 3);
  EXPECT_EQ(out.samples(), again.samples());
}

TEST(RaeEval, PurityAndConcentration) {
  const std::vector<int> groups{0, 0, 1, 1, 2, 2};
  const std::vector<int> labels{5, 5, 7, 7, 9, 9};
  EXPECT_DOUBLE_EQ(cluster_purity(groups, labels), 1.0);
  const std::vector<int> mixed{0, 0, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(cluster_purity(mixed, labels), 2.0 / 6.0);
  EXPECT_THROW(cluster_purity(groups, std::vector<int>{1}), InvalidInput);

  Matrix centroids(2, 1);
  centroids << 0.0, 10.0;
  Matrix x(4, 1);
  x << 1.0, 2.0, 9.0, -1.0;
  EXPECT_DOUBLE_EQ(nearest_centroid_concentration(x, centroids), 0.75);
}

TEST(RaeEval, TransportAssignmentCoversEverySample) {
  const PointCloud data = gen_clusters(3, 10, 2, 0.3, 26);
  const RaeModel m = make_rae_model(EncoderKind::probabilistic, 2, small_config(26));
  const std::vector<int> a = transport_assignment(m, data, 0.1);
  ASSERT_EQ(a.size(), 30u);
  for (int k : a) {
    EXPECT_GE(k, 0);
    EXPECT_LT(k, 3);
  }
  EXPECT_THROW(encode_posterior(make_rae_model(EncoderKind::deterministic, 2, small_config(26)),
                                data.samples()),
               InvalidInput);
}
