#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "relreg/bench.hpp"
#include "relreg/cotrain.hpp"
#include "relreg/error.hpp"
#include "relreg/gaussian_ot.hpp"
#include "relreg/io.hpp"
#include "relreg/ot_core.hpp"
#include "relreg/rae.hpp"
#include "relreg/sliced_ot.hpp"
#include "relreg/synth.hpp"

namespace relreg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitUsage = 2;

namespace cli {

// Flat JSON object with insertion-ordered keys; numbers at 12 significant
// digits.
class JsonLine {
 public:
  JsonLine& num(const std::string& key, double v) {
    if (!std::isfinite(v)) throw SolverDegenerate("result '" + key + "' is not finite");
    return raw(key, format_double(v, 12));
  }
  JsonLine& integer(const std::string& key, long long v) { return raw(key, std::to_string(v)); }
  JsonLine& str(const std::string& key, const std::string& v) {
    return raw(key, Json(v).dump());
  }
  JsonLine& nums(const std::string& key, const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) throw SolverDegenerate("result '" + key + "' is not finite");
      if (i > 0) s += ", ";
      s += format_double(v[i], 12);
    }
    return raw(key, s + "]");
  }
  JsonLine& raw(const std::string& key, const std::string& text) {
    fields_.emplace_back(key, text);
    return *this;
  }
  std::string str() const {
    std::string s = "{";
    for (std::size_t i = 0; i < fields_.size(); ++i) {
      if (i > 0) s += ", ";
      s += Json(fields_[i].first).dump() + ": " + fields_[i].second;
    }
    return s + "}";
  }

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

// Independent sub-seed for purpose `k`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
  return RngStream(seed, 0).split(k).next_u64();
}

struct DistArgs {
  std::string mode, a, b, plan_out, warm = "product";
  double beta = 0.5;
  int slices = 50;
  int iters = 20;
  double epsilon = 0.05;
  std::uint64_t seed = 0;
};

inline void run_dist(const DistArgs& o, std::ostream& out) {
  const PointCloud x = load_point_cloud(o.a);
  const PointCloud y = load_point_cloud(o.b);
  double value = 0.0;
  Matrix plan;
  FgwSolverOpts solver;
  solver.outer_iters = o.iters;
  solver.seed = o.seed;
  solver.warm_start = o.warm == "identity" ? WarmStart::identity : WarmStart::product;
  if (o.mode == "w-sinkhorn") {
    const CostMatrix c = build_cost_matrix(x, y);
    const double scale = std::max(c.entries().maxCoeff(), 1e-300);
    SinkhornOpts so;
    so.max_iters = 1000;
    const SinkhornResult r = sinkhorn(DiscreteDistribution::uniform(x.size()),
                                      DiscreteDistribution::uniform(y.size()),
                                      gibbs_kernel(c, o.epsilon * scale), so);
    plan = r.plan.coupling();
    value = c.entries().cwiseProduct(plan).sum();
  } else if (o.mode == "gw" || o.mode == "fgw") {
    const FgwResult r = empirical_fgw(x, y, o.mode == "gw" ? 1.0 : o.beta, solver);
    plan = r.plan.coupling();
    value = r.value;
  } else {
    const double beta = o.mode == "sliced-w" ? 0.0 : o.mode == "sliced-gw" ? 1.0 : o.beta;
    const ProjectionSet px = sample_projections(x.dim(), o.slices, derive_seed(o.seed, 1));
    if (o.mode == "sliced-gw") {
      const ProjectionSet py = sample_projections(y.dim(), o.slices, derive_seed(o.seed, 2));
      value = sliced_gw(x, y, px, py);
    } else {
      value = sliced_fgw(x, y, beta, px);
    }
    if (!o.plan_out.empty()) throw InvalidInput("--plan-out is not available for sliced modes");
  }
  JsonLine j;
  j.num("distance", value);
  if (!o.plan_out.empty()) save_matrix_csv(o.plan_out, plan);
  out << j.str() << '\n';
}

struct GmmDistArgs {
  std::string a, b, warm = "product", plan_out;
  double beta = 0.5;
  int iters = 20;
  std::uint64_t seed = 0;
};

inline void run_gmm_dist(const GmmDistArgs& o, std::ostream& out) {
  const GaussianMixture p = load_gmm(o.a);
  const GaussianMixture q = load_gmm(o.b);
  FgwSolverOpts solver;
  solver.outer_iters = o.iters;
  solver.seed = o.seed;
  solver.warm_start = o.warm == "identity" ? WarmStart::identity : WarmStart::product;
  const FgwResult r = hierarchical_fgw(p, q, o.beta, solver);
  JsonLine j;
  j.num("distance", r.value).integer("outer_iterations", r.outer_iterations);
  if (!o.plan_out.empty()) save_matrix_csv(o.plan_out, r.plan.coupling());
  out << j.str() << '\n';
}

struct TrainArgs {
  std::string data, config, labels, report_out, checkpoint_out, plan_out;
  int epochs = 0;
  std::uint64_t seed = 0;
};

inline void run_train(const TrainArgs& o, EncoderKind kind, std::ostream& out) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_train_config(o.config);
  cfg.seed = o.seed;
  if (o.epochs > 0) cfg.epochs = o.epochs;
  const PointCloud data = load_point_cloud(o.data);
  std::vector<int> labels;
  if (!o.labels.empty()) {
    labels = load_labels(o.labels);
    if (static_cast<Index>(labels.size()) != data.size()) {
      throw InvalidInput("label count does not match the data");
    }
  }
  const TrainResult r =
      kind == EncoderKind::probabilistic ? train_prae(cfg, data) : train_drae(cfg, data);
  JsonLine j;
  j.integer("epochs", static_cast<long long>(r.report.epochs.size()))
      .num("first_recon_loss", r.report.epochs.front().recon_loss)
      .num("final_recon_loss", r.report.epochs.back().recon_loss)
      .num("final_reg_value", r.report.epochs.back().reg_value)
      .integer("skipped_batches", r.report.skipped_batches);
  if (!labels.empty() && kind == EncoderKind::probabilistic) {
    j.num("purity", cluster_purity(transport_assignment(r.model, data, cfg.beta,
                                                        cfg.solver_opts()),
                                   labels));
  }
  if (!o.report_out.empty()) save_report(o.report_out, r.report);
  if (!o.checkpoint_out.empty()) save_checkpoint(o.checkpoint_out, r.model);
  if (!o.plan_out.empty()) {
    if (r.report.last_plan.size() == 0) throw InvalidInput("no transport plan was recorded");
    save_matrix_csv(o.plan_out, r.report.last_plan);
  }
  out << j.str() << '\n';
}

struct CoTrainArgs {
  std::string a, b, config, labels, report_a, report_b, mode;
  double tau = -1.0;
  int epochs = 0;
  std::uint64_t seed = 0;
};

inline void run_cotrain(const CoTrainArgs& o, std::ostream& out) {
  CoTrainConfig cfg = o.config.empty() ? CoTrainConfig{} : load_cotrain_config(o.config);
  cfg.seed = o.seed;
  cfg.view_a.seed = derive_seed(o.seed, 1);
  cfg.view_b.seed = derive_seed(o.seed, 2);
  if (o.tau >= 0.0) cfg.tau = o.tau;
  if (o.epochs > 0) cfg.view_a.epochs = cfg.view_b.epochs = o.epochs;
  if (o.mode == "deterministic") cfg.mode = EncoderKind::deterministic;
  if (o.mode == "probabilistic") cfg.mode = EncoderKind::probabilistic;
  const PointCloud a = load_point_cloud(o.a);
  const PointCloud b = load_point_cloud(o.b);
  const CoTrainResult r = cotrain(cfg, a, b);
  JsonLine j;
  j.num("tau", cfg.tau)
      .num("final_recon_loss_a", r.report.view_a.epochs.back().recon_loss)
      .num("final_recon_loss_b", r.report.view_b.epochs.back().recon_loss)
      .num("initial_relational", r.report.initial_relational)
      .num("final_relational", r.report.relational.back());
  if (!o.labels.empty()) {
    const std::vector<int> labels = load_labels(o.labels);
    j.num("accuracy", eval_multiview(r.model_a, r.model_b, a, b, labels, derive_seed(o.seed, 3)));
  }
  if (!o.report_a.empty()) save_report(o.report_a, r.report.view_a);
  if (!o.report_b.empty()) save_report(o.report_b, r.report.view_b);
  out << j.str() << '\n';
}

struct SynthArgs {
  std::string kind = "clusters", out, out_b, labels_out;
  int k = 3, n = 100, dim = 2;
  double spread = 0.3, noise = 0.1;
  std::uint64_t seed = 0;
};

inline void run_synth(const SynthArgs& o, std::ostream& out) {
  JsonLine j;
  if (o.kind == "clusters") {
    const PointCloud p = gen_clusters(o.k, o.n, o.dim, o.spread, o.seed);
    save_point_cloud(o.out, p);
    if (!o.labels_out.empty()) save_labels(o.labels_out, p.labels());
    j.integer("rows", p.size()).integer("dim", p.dim());
  } else {
    if (o.out_b.empty()) throw InvalidInput("--out-b is required for two-view data");
    const TwoViewData d = gen_two_view(o.n, o.seed, o.noise);
    save_point_cloud(o.out, d.view_a);
    save_point_cloud(o.out_b, d.view_b);
    if (!o.labels_out.empty()) save_labels(o.labels_out, d.labels);
    j.integer("rows", d.view_a.size()).integer("dim_a", 2).integer("dim_b", 3);
  }
  out << j.str() << '\n';
}

struct BenchArgs {
  std::string mode = "scaling", csv_out;
  std::vector<long> sizes = {64, 128, 256, 512};
  int dim = 8, iters = 20, slices = 50, repeats = 3;
  std::uint64_t seed = 0;
};

// Timings are machine dependent, so this is the one subcommand whose output
// differs between runs.
inline void run_bench(const BenchArgs& o, std::ostream& out) {
  ScalingOpts so;
  so.sizes.assign(o.sizes.begin(), o.sizes.end());
  so.dim = o.dim;
  so.outer_iters = o.iters;
  so.projections = o.slices;
  so.repeats = o.repeats;
  so.seed = o.seed;
  const ScalingResult r = run_scaling_bench(so);
  std::ostringstream csv;
  csv << "N,direct_seconds,sliced_seconds\n";
  for (const ScalingRow& row : r.rows) {
    csv << row.n << ',' << format_double(row.direct_seconds, 12) << ','
        << format_double(row.sliced_seconds, 12) << '\n';
  }
  if (!o.csv_out.empty()) detail::write_file(o.csv_out, csv.str());
  out << csv.str();
  JsonLine j;
  j.num("direct_slope", r.direct_slope).num("sliced_slope", r.sliced_slope);
  out << j.str() << '\n';
}

}  // namespace cli

// Parses argv, runs one subcommand and returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fused Gromov-Wasserstein distances and relational autoencoder training"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  cli::DistArgs dist;
  CLI::App* s_dist = app.add_subcommand("dist", "Distance between two point-cloud CSV files");
  s_dist->add_option("--mode", dist.mode, "Distance")
      ->required()
      ->check(CLI::IsMember({"w-sinkhorn", "gw", "fgw", "sliced-w", "sliced-gw", "sliced-fgw"}));
  s_dist->add_option("--a", dist.a, "First cloud")->required();
  s_dist->add_option("--b", dist.b, "Second cloud")->required();
  s_dist->add_option("--beta", dist.beta, "Trade-off for fgw and sliced-fgw")
      ->check(CLI::Range(0.0, 1.0));
  s_dist->add_option("--slices", dist.slices, "Projection count")->check(CLI::PositiveNumber);
  s_dist->add_option("--iters", dist.iters, "Outer solver iterations")->check(CLI::PositiveNumber);
  s_dist->add_option("--epsilon", dist.epsilon, "Entropic weight relative to the largest cost")
      ->check(CLI::PositiveNumber);
  s_dist->add_option("--warm", dist.warm, "Initial plan for gw and fgw")
      ->check(CLI::IsMember({"product", "identity"}));
  s_dist->add_option("--plan-out", dist.plan_out, "Write the transport plan as CSV");
  s_dist->add_option("--seed", dist.seed, "Random seed")->required();

  cli::GmmDistArgs gmm;
  CLI::App* s_gmm = app.add_subcommand("gmm-dist", "Hierarchical FGW between two GMM JSON files");
  s_gmm->add_option("--a", gmm.a, "First mixture")->required();
  s_gmm->add_option("--b", gmm.b, "Second mixture")->required();
  s_gmm->add_option("--beta", gmm.beta, "0: Wasserstein, 1: Gromov-Wasserstein")
      ->check(CLI::Range(0.0, 1.0));
  s_gmm->add_option("--warm", gmm.warm, "Initial plan")
      ->check(CLI::IsMember({"product", "identity"}));
  s_gmm->add_option("--iters", gmm.iters, "Outer solver iterations")->check(CLI::PositiveNumber);
  s_gmm->add_option("--plan-out", gmm.plan_out, "Write the transport plan as CSV");
  s_gmm->add_option("--seed", gmm.seed, "Random seed")->required();

  cli::TrainArgs prae, drae;
  auto add_train = [&](const char* name, const char* help, cli::TrainArgs& t) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--data", t.data, "Training cloud CSV")->required();
    s->add_option("--config", t.config, "Training config JSON");
    s->add_option("--epochs", t.epochs, "Override the epoch count")->check(CLI::PositiveNumber);
    s->add_option("--labels", t.labels, "Label CSV for the purity report");
    s->add_option("--report-out", t.report_out, "Per-epoch report CSV");
    s->add_option("--checkpoint-out", t.checkpoint_out, "Model checkpoint JSON");
    s->add_option("--plan-out", t.plan_out, "Plan of the last batch as CSV");
    s->add_option("--seed", t.seed, "Random seed")->required();
    return s;
  };
  CLI::App* s_prae = add_train("train-prae", "Train a probabilistic relational autoencoder", prae);
  CLI::App* s_drae = add_train("train-drae", "Train a deterministic relational autoencoder", drae);

  cli::CoTrainArgs co;
  CLI::App* s_co = app.add_subcommand("cotrain", "Co-train two autoencoders on unpaired views");
  s_co->add_option("--a", co.a, "View A cloud")->required();
  s_co->add_option("--b", co.b, "View B cloud")->required();
  s_co->add_option("--config", co.config, "Co-training config JSON");
  s_co->add_option("--tau", co.tau, "Relational weight")->check(CLI::Range(0.0, 1.0));
  s_co->add_option("--mode", co.mode, "Encoder kind")
      ->check(CLI::IsMember({"probabilistic", "deterministic"}));
  s_co->add_option("--epochs", co.epochs, "Override the epoch count")->check(CLI::PositiveNumber);
  s_co->add_option("--labels", co.labels, "Paired labels for the accuracy report");
  s_co->add_option("--report-a", co.report_a, "View A report CSV");
  s_co->add_option("--report-b", co.report_b, "View B report CSV");
  s_co->add_option("--seed", co.seed, "Random seed")->required();

  cli::SynthArgs syn;
  CLI::App* s_syn = app.add_subcommand("synth", "Generate synthetic data");
  s_syn->add_option("--kind", syn.kind, "Dataset")->check(CLI::IsMember({"clusters", "two-view"}));
  s_syn->add_option("--k", syn.k, "Cluster count")->check(CLI::PositiveNumber);
  s_syn->add_option("--n", syn.n, "Points per cluster, or rows for two-view")
      ->check(CLI::PositiveNumber);
  s_syn->add_option("--dim", syn.dim, "Dimension")->check(CLI::PositiveNumber);
  s_syn->add_option("--spread", syn.spread, "Cluster std")->check(CLI::PositiveNumber);
  s_syn->add_option("--noise", syn.noise, "Two-view noise std")->check(CLI::NonNegativeNumber);
  s_syn->add_option("--out", syn.out, "Output CSV (view A for two-view)")->required();
  s_syn->add_option("--out-b", syn.out_b, "View B output CSV");
  s_syn->add_option("--labels-out", syn.labels_out, "Label CSV");
  s_syn->add_option("--seed", syn.seed, "Random seed")->required();

  cli::BenchArgs bench;
  CLI::App* s_bench = app.add_subcommand("bench", "Runtime scaling of direct vs sliced FGW");
  s_bench->add_option("--mode", bench.mode, "Benchmark")->check(CLI::IsMember({"scaling"}));
  s_bench->add_option("--sizes", bench.sizes, "Comma-separated sample counts")
      ->delimiter(',')
      ->check(CLI::Range(2L, 1L << 20));
  s_bench->add_option("--dim", bench.dim, "Dimension")->check(CLI::PositiveNumber);
  s_bench->add_option("--iters", bench.iters, "Outer solver iterations")->check(CLI::PositiveNumber);
  s_bench->add_option("--slices", bench.slices, "Projection count")->check(CLI::PositiveNumber);
  s_bench->add_option("--repeats", bench.repeats, "Repeats per size")->check(CLI::PositiveNumber);
  s_bench->add_option("--csv-out", bench.csv_out, "Write the timing table as CSV");
  s_bench->add_option("--seed", bench.seed, "Random seed")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s_dist->parsed()) cli::run_dist(dist, out);
    else if (s_gmm->parsed()) cli::run_gmm_dist(gmm, out);
    else if (s_prae->parsed()) cli::run_train(prae, EncoderKind::probabilistic, out);
    else if (s_drae->parsed()) cli::run_train(drae, EncoderKind::deterministic, out);
    else if (s_co->parsed()) cli::run_cotrain(co, out);
    else if (s_syn->parsed()) cli::run_synth(syn, out);
    else if (s_bench->parsed()) cli::run_bench(bench, out);
  } catch (const SolverDegenerate& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace relreg
