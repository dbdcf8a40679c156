#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "relreg/cotrain.hpp"
#include "relreg/error.hpp"
#include "relreg/gaussian_ot.hpp"
#include "relreg/nn.hpp"
#include "relreg/point_cloud.hpp"
#include "relreg/rae.hpp"

namespace relreg {

using Json = nlohmann::json;

// 17 significant digits, enough to reproduce any double exactly.
inline std::string format_double(double v, int digits = 17) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view text, const std::string& source, std::size_t line,
                           std::size_t field) {
  const std::string_view t = trim(text);
  if (t.empty()) throw ParseError(source, line, field, "empty value");
  const char* begin = t.data();
  if (*begin == '+') ++begin;
  double v = 0.0;
  const auto r = std::from_chars(begin, t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ParseError(source, line, field, "not a number: '" + std::string(t) + "'");
  }
  if (!std::isfinite(v)) throw ParseError(source, line, field, "non-finite value");
  return v;
}

inline long long parse_int(std::string_view text, const std::string& source, std::size_t line,
                           std::size_t field) {
  const std::string_view t = trim(text);
  long long v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ParseError(source, line, field, "not an integer: '" + std::string(t) + "'");
  }
  return v;
}

// Splits each non-blank line on commas; returns (line number, fields).
inline std::vector<std::pair<std::size_t, std::vector<std::string_view>>> split_csv(
    const std::string& text) {
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;
  std::string_view all(text);
  std::size_t line_no = 0;
  while (!all.empty()) {
    ++line_no;
    const auto nl = all.find('\n');
    const std::string_view line = all.substr(0, nl);
    all = nl == std::string_view::npos ? std::string_view{} : all.substr(nl + 1);
    if (trim(line).empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t at = 0;
    while (true) {
      const auto comma = line.find(',', at);
      fields.push_back(line.substr(at, comma == std::string_view::npos ? line.npos : comma - at));
      if (comma == std::string_view::npos) break;
      at = comma + 1;
    }
    rows.emplace_back(line_no, std::move(fields));
  }
  return rows;
}

inline std::string read_stream(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_stream(in);
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(source, 0, 0, e.what());
  }
}

inline Matrix json_to_matrix(const Json& j, const std::string& source, const std::string& key) {
  if (!j.is_array() || j.empty()) throw ParseError(source, 0, 0, "'" + key + "' must be a nonempty array of rows");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols || cols == 0) {
      throw ParseError(source, 0, 0, "'" + key + "' row " + std::to_string(r) + " has the wrong length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ParseError(source, 0, 0, "'" + key + "' holds a non-number");
      m(static_cast<Index>(r), static_cast<Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

inline Json matrix_to_json(const Matrix& m) {
  Json out = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

template <class T>
void read_key(const Json& j, const char* key, T& out, const std::string& source) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ParseError(source, 0, 0, std::string("key '") + key + "': " + e.what());
  }
}

inline void reject_unknown_keys(const Json& j, const std::vector<std::string>& known,
                                const std::string& source) {
  if (!j.is_object()) throw ParseError(source, 0, 0, "expected a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const std::string& k : known) ok = ok || k == item.key();
    if (!ok) throw ParseError(source, 0, 0, "unknown key '" + item.key() + "'");
  }
}

}  // namespace detail

// ---- Point clouds and matrices: no header, one row per line.

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  std::string line;
  for (Index r = 0; r < m.rows(); ++r) {
    line.clear();
    for (Index c = 0; c < m.cols(); ++c) {
      if (c > 0) line += ',';
      line += format_double(m(r, c));
    }
    line += '\n';
    out << line;
  }
}

inline Matrix parse_matrix_csv(const std::string& text, const std::string& source = "<csv>") {
  const auto rows = detail::split_csv(text);
  if (rows.empty()) throw ParseError(source, 0, 0, "no rows (at least one sample is required)");
  const std::size_t cols = rows.front().second.size();
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& [line, fields] = rows[r];
    if (fields.size() != cols) {
      throw ParseError(source, line, std::min(fields.size(), cols) + 1,
                       "expected " + std::to_string(cols) + " fields, found " +
                           std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Index>(r), static_cast<Index>(c)) =
          detail::parse_double(fields[c], source, line, c + 1);
    }
  }
  return m;
}

inline void save_point_cloud(const std::string& path, const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidInput("save_point_cloud: empty cloud");
  std::ostringstream ss;
  write_matrix_csv(ss, cloud.samples());
  detail::write_file(path, ss.str());
}

inline PointCloud load_point_cloud(const std::string& path) {
  return PointCloud(parse_matrix_csv(detail::read_file(path), path));
}

inline void save_matrix_csv(const std::string& path, const Matrix& m) {
  std::ostringstream ss;
  write_matrix_csv(ss, m);
  detail::write_file(path, ss.str());
}

// ---- Labels: a single integer column.

inline std::vector<int> parse_labels(const std::string& text, const std::string& source = "<labels>") {
  std::vector<int> out;
  for (const auto& [line, fields] : detail::split_csv(text)) {
    if (fields.size() != 1) throw ParseError(source, line, 2, "expected a single label per line");
    const long long v = detail::parse_int(fields[0], source, line, 1);
    if (v < 0 || v > 1'000'000'000) throw ParseError(source, line, 1, "label out of range");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw ParseError(source, 0, 0, "no labels");
  return out;
}

inline void save_labels(const std::string& path, std::span<const int> labels) {
  std::string text;
  for (int l : labels) text += std::to_string(l) + '\n';
  detail::write_file(path, text);
}

inline std::vector<int> load_labels(const std::string& path) {
  return parse_labels(detail::read_file(path), path);
}

// ---- Gaussian mixtures: {"weights": [...], "means": [[...]], "stds": [[...]]}.

inline Json gmm_to_json(const GaussianMixture& g) {
  Json w = Json::array();
  for (Index k = 0; k < g.size(); ++k) w.push_back(g.weights()[k]);
  return Json{{"weights", w}, {"means", detail::matrix_to_json(g.means())},
              {"stds", detail::matrix_to_json(g.stds())}};
}

inline GaussianMixture gmm_from_json(const Json& j, const std::string& source = "<gmm>") {
  detail::reject_unknown_keys(j, {"weights", "means", "stds"}, source);
  if (!j.contains("means") || !j.contains("stds")) {
    throw ParseError(source, 0, 0, "'means' and 'stds' are required");
  }
  const Matrix means = detail::json_to_matrix(j["means"], source, "means");
  const Matrix stds = detail::json_to_matrix(j["stds"], source, "stds");
  if (stds.rows() != means.rows() || stds.cols() != means.cols()) {
    throw ParseError(source, 0, 0, "'means' and 'stds' differ in shape");
  }
  if (!(stds.array() > 0.0).all()) throw ParseError(source, 0, 0, "stds must be positive");
  Vector w = Vector::Constant(means.rows(), 1.0 / static_cast<double>(means.rows()));
  if (j.contains("weights")) {
    const Json& jw = j["weights"];
    if (!jw.is_array() || jw.size() != static_cast<std::size_t>(means.rows())) {
      throw ParseError(source, 0, 0, "'weights' must have one entry per component");
    }
    for (std::size_t k = 0; k < jw.size(); ++k) {
      if (!jw[k].is_number()) throw ParseError(source, 0, 0, "'weights' holds a non-number");
      w(static_cast<Index>(k)) = jw[k].get<double>();
    }
  }
  try {
    return GaussianMixture::from_rows(means, stds, DiscreteDistribution(w));
  } catch (const InvalidInput& e) {
    throw ParseError(source, 0, 0, e.what());
  }
}

inline void save_gmm(const std::string& path, const GaussianMixture& g) {
  detail::write_file(path, gmm_to_json(g).dump(2) + "\n");
}

inline GaussianMixture load_gmm(const std::string& path) {
  return gmm_from_json(detail::parse_json(detail::read_file(path), path), path);
}

// ---- Configurations: keys are the field names.

inline Json to_json(const TrainConfig& c) {
  return Json{{"gamma", c.gamma},
              {"beta", c.beta},
              {"components", c.components},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"latent_dim", c.latent_dim},
              {"hidden", c.hidden},
              {"projections", c.projections},
              {"outer_iters", c.outer_iters},
              {"inner_sinkhorn_iters", c.inner_sinkhorn_iters},
              {"alpha_scale", c.alpha_scale},
              {"seed", c.seed},
              {"adam",
               {{"lr", c.adam.lr},
                {"beta1", c.adam.beta1},
                {"beta2", c.adam.beta2},
                {"epsilon", c.adam.epsilon}}},
              {"learn_prior", c.learn_prior},
              {"prior_init", c.prior_init == PriorInit::random ? "random" : "standard_normal"},
              {"prior_init_scale", c.prior_init_scale},
              {"prior_init_log_var", c.prior_init_log_var}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline TrainConfig train_config_from_json(const Json& j, const std::string& source = "<config>") {
  detail::reject_unknown_keys(
      j,
      {"gamma", "beta", "components", "batch_size", "epochs", "latent_dim", "hidden",
       "projections", "outer_iters", "inner_sinkhorn_iters", "alpha_scale", "seed", "adam",
       "learn_prior", "prior_init", "prior_init_scale", "prior_init_log_var"},
      source);
  TrainConfig c;
  detail::read_key(j, "gamma", c.gamma, source);
  detail::read_key(j, "beta", c.beta, source);
  detail::read_key(j, "components", c.components, source);
  detail::read_key(j, "batch_size", c.batch_size, source);
  detail::read_key(j, "epochs", c.epochs, source);
  detail::read_key(j, "latent_dim", c.latent_dim, source);
  detail::read_key(j, "hidden", c.hidden, source);
  detail::read_key(j, "projections", c.projections, source);
  detail::read_key(j, "outer_iters", c.outer_iters, source);
  detail::read_key(j, "inner_sinkhorn_iters", c.inner_sinkhorn_iters, source);
  detail::read_key(j, "alpha_scale", c.alpha_scale, source);
  detail::read_key(j, "seed", c.seed, source);
  detail::read_key(j, "learn_prior", c.learn_prior, source);
  detail::read_key(j, "prior_init_scale", c.prior_init_scale, source);
  detail::read_key(j, "prior_init_log_var", c.prior_init_log_var, source);
  if (j.contains("adam")) {
    const Json& a = j["adam"];
    detail::reject_unknown_keys(a, {"lr", "beta1", "beta2", "epsilon"}, source);
    detail::read_key(a, "lr", c.adam.lr, source);
    detail::read_key(a, "beta1", c.adam.beta1, source);
    detail::read_key(a, "beta2", c.adam.beta2, source);
    detail::read_key(a, "epsilon", c.adam.epsilon, source);
  }
  if (j.contains("prior_init")) {
    std::string s;
    detail::read_key(j, "prior_init", s, source);
    if (s == "random") c.prior_init = PriorInit::random;
    else if (s == "standard_normal") c.prior_init = PriorInit::standard_normal;
    else throw ParseError(source, 0, 0, "prior_init must be 'random' or 'standard_normal'");
  }
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(source, 0, 0, e.what());
  }
  return c;
}

inline Json to_json(const CoTrainConfig& c) {
  return Json{{"view_a", to_json(c.view_a)},
              {"view_b", to_json(c.view_b)},
              {"gamma", c.gamma},
              {"tau", c.tau},
              {"mode", c.mode == EncoderKind::probabilistic ? "probabilistic" : "deterministic"},
              {"seed", c.seed},
              {"outer_iters", c.outer_iters},
              {"inner_sinkhorn_iters", c.inner_sinkhorn_iters},
              {"alpha_scale", c.alpha_scale},
              {"projections", c.projections}};
}

inline CoTrainConfig cotrain_config_from_json(const Json& j,
                                              const std::string& source = "<config>") {
  detail::reject_unknown_keys(j,
                              {"view_a", "view_b", "gamma", "tau", "mode", "seed", "outer_iters",
                               "inner_sinkhorn_iters", "alpha_scale", "projections"},
                              source);
  CoTrainConfig c;
  if (j.contains("view_a")) c.view_a = train_config_from_json(j["view_a"], source + " view_a");
  if (j.contains("view_b")) c.view_b = train_config_from_json(j["view_b"], source + " view_b");
  detail::read_key(j, "gamma", c.gamma, source);
  detail::read_key(j, "tau", c.tau, source);
  detail::read_key(j, "seed", c.seed, source);
  detail::read_key(j, "outer_iters", c.outer_iters, source);
  detail::read_key(j, "inner_sinkhorn_iters", c.inner_sinkhorn_iters, source);
  detail::read_key(j, "alpha_scale", c.alpha_scale, source);
  detail::read_key(j, "projections", c.projections, source);
  if (j.contains("mode")) {
    std::string s;
    detail::read_key(j, "mode", s, source);
    if (s == "probabilistic") c.mode = EncoderKind::probabilistic;
    else if (s == "deterministic") c.mode = EncoderKind::deterministic;
    else throw ParseError(source, 0, 0, "mode must be 'probabilistic' or 'deterministic'");
  }
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(source, 0, 0, e.what());
  }
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  return train_config_from_json(detail::parse_json(detail::read_file(path), path), path);
}

inline CoTrainConfig load_cotrain_config(const std::string& path) {
  return cotrain_config_from_json(detail::parse_json(detail::read_file(path), path), path);
}

// ---- Training reports: epoch,recon_loss,reg_value,seconds.

inline constexpr std::string_view kReportHeader = "epoch,recon_loss,reg_value,seconds";

inline void write_report_csv(std::ostream& out, const TrainReport& r) {
  out << kReportHeader << '\n';
  for (const EpochRecord& e : r.epochs) {
    out << e.epoch << ',' << format_double(e.recon_loss) << ',' << format_double(e.reg_value)
        << ',' << format_double(e.seconds) << '\n';
  }
}

inline TrainReport parse_report_csv(const std::string& text, const std::string& source = "<report>") {
  const auto rows = detail::split_csv(text);
  if (rows.empty()) throw ParseError(source, 1, 0, "missing header");
  std::string header;
  for (std::size_t i = 0; i < rows.front().second.size(); ++i) {
    if (i > 0) header += ',';
    header += detail::trim(rows.front().second[i]);
  }
  if (header != kReportHeader) {
    throw ParseError(source, rows.front().first, 0, "header must be '" + std::string(kReportHeader) + "'");
  }
  TrainReport r;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& [line, f] = rows[i];
    if (f.size() != 4) throw ParseError(source, line, std::min<std::size_t>(f.size(), 4) + 1, "expected 4 fields");
    EpochRecord e;
    e.epoch = static_cast<int>(detail::parse_int(f[0], source, line, 1));
    e.recon_loss = detail::parse_double(f[1], source, line, 2);
    e.reg_value = detail::parse_double(f[2], source, line, 3);
    e.seconds = detail::parse_double(f[3], source, line, 4);
    r.epochs.push_back(e);
  }
  return r;
}

inline void save_report(const std::string& path, const TrainReport& r) {
  std::ostringstream ss;
  write_report_csv(ss, r);
  detail::write_file(path, ss.str());
}

inline TrainReport load_report(const std::string& path) {
  return parse_report_csv(detail::read_file(path), path);
}

// ---- Checkpoints: networks and prior of a trained model.

inline Json mlp_to_json(const MlpModel& m) {
  Json sizes = Json::array();
  for (Index s : m.layer_sizes()) sizes.push_back(s);
  Json acts = Json::array();
  for (Activation a : m.activations()) acts.push_back(a == Activation::relu ? "relu" : "identity");
  const Vector p = m.parameters();
  return Json{{"sizes", sizes},
              {"activations", acts},
              {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
}

inline MlpModel mlp_from_json(const Json& j, const std::string& source) {
  detail::reject_unknown_keys(j, {"sizes", "activations", "parameters"}, source);
  std::vector<Index> sizes;
  std::vector<std::string> act_names;
  std::vector<double> params;
  detail::read_key(j, "sizes", sizes, source);
  detail::read_key(j, "activations", act_names, source);
  detail::read_key(j, "parameters", params, source);
  std::vector<Activation> acts;
  for (const std::string& a : act_names) {
    if (a == "relu") acts.push_back(Activation::relu);
    else if (a == "identity") acts.push_back(Activation::identity);
    else throw ParseError(source, 0, 0, "unknown activation '" + a + "'");
  }
  try {
    MlpModel m = MlpModel::zeros(sizes, acts);
    m.set_parameters(Eigen::Map<const Vector>(params.data(), static_cast<Index>(params.size())));
    return m;
  } catch (const InvalidInput& e) {
    throw ParseError(source, 0, 0, e.what());
  }
}

inline Json checkpoint_to_json(const RaeModel& m) {
  return Json{{"kind", m.kind == EncoderKind::probabilistic ? "probabilistic" : "deterministic"},
              {"encoder", mlp_to_json(m.encoder)},
              {"decoder", mlp_to_json(m.decoder)},
              {"prior",
               {{"means", detail::matrix_to_json(m.prior.means)},
                {"log_vars", detail::matrix_to_json(m.prior.log_vars)}}}};
}

inline RaeModel checkpoint_from_json(const Json& j, const std::string& source = "<checkpoint>") {
  detail::reject_unknown_keys(j, {"kind", "encoder", "decoder", "prior"}, source);
  for (const char* k : {"kind", "encoder", "decoder", "prior"}) {
    if (!j.contains(k)) throw ParseError(source, 0, 0, std::string("missing key '") + k + "'");
  }
  RaeModel m;
  std::string kind;
  detail::read_key(j, "kind", kind, source);
  if (kind == "probabilistic") m.kind = EncoderKind::probabilistic;
  else if (kind == "deterministic") m.kind = EncoderKind::deterministic;
  else throw ParseError(source, 0, 0, "unknown kind '" + kind + "'");
  m.encoder = mlp_from_json(j["encoder"], source);
  m.decoder = mlp_from_json(j["decoder"], source);
  const Json& p = j["prior"];
  detail::reject_unknown_keys(p, {"means", "log_vars"}, source);
  if (!p.contains("means") || !p.contains("log_vars")) {
    throw ParseError(source, 0, 0, "prior needs 'means' and 'log_vars'");
  }
  m.prior.means = detail::json_to_matrix(p["means"], source, "means");
  m.prior.log_vars = detail::json_to_matrix(p["log_vars"], source, "log_vars");
  const Index enc_out = m.kind == EncoderKind::probabilistic ? 2 * m.latent_dim() : m.latent_dim();
  if (m.prior.log_vars.rows() != m.prior.means.rows() ||
      m.prior.log_vars.cols() != m.prior.means.cols() || m.prior.dim() != m.latent_dim() ||
      m.encoder.output_dim() != enc_out || m.encoder.input_dim() != m.data_dim()) {
    throw ParseError(source, 0, 0, "encoder, decoder and prior shapes are inconsistent");
  }
  return m;
}

inline void save_checkpoint(const std::string& path, const RaeModel& m) {
  detail::write_file(path, checkpoint_to_json(m).dump() + "\n");
}

inline RaeModel load_checkpoint(const std::string& path) {
  return checkpoint_from_json(detail::parse_json(detail::read_file(path), path), path);
}

}  // namespace relreg
