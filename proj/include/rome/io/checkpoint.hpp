#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "rome/core_model.hpp"
#include "rome/em_mixture.hpp"
#include "rome/io/csv.hpp"
#include "rome/moe.hpp"

namespace rome::io {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline Vector vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline Matrix matrix_from_json(const json& j, Index cols) {
  Matrix m(static_cast<Index>(j.size()), cols);
  for (Index i = 0; i < m.rows(); ++i) {
    const auto r = j.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
    if (static_cast<Index>(r.size()) != cols) throw DataError("checkpoint: ragged matrix");
    for (Index k = 0; k < cols; ++k) m(i, k) = r[static_cast<std::size_t>(k)];
  }
  return m;
}

inline json to_json(const FeatureSpec& s) {
  return {{"a", s.a_names}, {"s", s.s_names}, {"y", s.y_name}, {"mem", s.mem_indices}, {"out", s.out_indices}};
}

inline FeatureSpec feature_spec_from_json(const json& j) {
  FeatureSpec s;
  s.a_names = j.at("a").get<std::vector<std::string>>();
  s.s_names = j.at("s").get<std::vector<std::string>>();
  s.y_name = j.at("y").get<std::string>();
  s.mem_indices = j.at("mem").get<std::vector<std::size_t>>();
  s.out_indices = j.at("out").get<std::vector<std::size_t>>();
  return s;
}

inline json to_json(const Standardizer& st) {
  return {{"a_mean", to_json(st.a_mean)}, {"a_sd", to_json(st.a_sd)}, {"s_mean", to_json(st.s_mean)},
          {"s_sd", to_json(st.s_sd)},     {"y_mean", st.y_mean},      {"y_sd", st.y_sd}};
}

inline Standardizer standardizer_from_json(const json& j) {
  Standardizer st;
  st.a_mean = vector_from_json(j.at("a_mean"));
  st.a_sd = vector_from_json(j.at("a_sd"));
  st.s_mean = vector_from_json(j.at("s_mean"));
  st.s_sd = vector_from_json(j.at("s_sd"));
  st.y_mean = j.at("y_mean").get<double>();
  st.y_sd = j.at("y_sd").get<double>();
  return st;
}

inline json to_json(const moe::MoeConfig& c) {
  return {{"g", c.g},
          {"variant", moe::to_string(c.variant)},
          {"alpha", c.alpha},
          {"lr", c.lr},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"hidden_expert", c.hidden_expert},
          {"hidden_gate", c.hidden_gate},
          {"mask_threshold", c.mask_threshold},
          {"seed", c.seed},
          {"optimizer", moe::to_string(c.optimizer)},
          {"expert_uses_s", c.expert_uses_s},
          {"loss_target", moe::to_string(c.loss_target)},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps}};
}

inline moe::MoeConfig moe_config_from_json(const json& j) {
  moe::MoeConfig c;
  c.g = j.at("g").get<int>();
  c.variant = moe::parse_variant(j.at("variant").get<std::string>());
  c.alpha = j.at("alpha").get<double>();
  c.lr = j.at("lr").get<double>();
  c.batch = j.at("batch").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.hidden_expert = j.at("hidden_expert").get<int>();
  c.hidden_gate = j.at("hidden_gate").get<int>();
  c.mask_threshold = j.at("mask_threshold").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.optimizer = moe::parse_optimizer(j.at("optimizer").get<std::string>());
  c.expert_uses_s = j.at("expert_uses_s").get<bool>();
  c.loss_target = moe::parse_loss_target(j.at("loss_target").get<std::string>());
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  return c;
}

inline json to_json(const em::EmConfig& c) {
  return {{"g", c.g},         {"max_iter", c.max_iter},       {"tau1", c.tau1}, {"tau2", c.tau2}, {"ridge", c.ridge},
          {"min_group_n", c.min_group_n}, {"irls_max_iter", c.irls_max_iter}, {"seed", c.seed}};
}

inline em::EmConfig em_config_from_json(const json& j) {
  em::EmConfig c;
  c.g = j.at("g").get<int>();
  c.max_iter = j.at("max_iter").get<int>();
  c.tau1 = j.at("tau1").get<double>();
  c.tau2 = j.at("tau2").get<double>();
  c.ridge = j.at("ridge").get<double>();
  c.min_group_n = j.at("min_group_n").get<int>();
  c.irls_max_iter = j.at("irls_max_iter").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// Identifies the data a model was fitted on: source, row count and split.
struct DataStamp {
  std::string source;
  std::int64_t rows = 0;
  std::int64_t train = 0, val = 0, test = 0;
  std::uint64_t seed = 0;
  bool operator==(const DataStamp&) const = default;
};

inline json to_json(const DataStamp& d) {
  return {{"source", d.source}, {"rows", d.rows}, {"train", d.train}, {"val", d.val}, {"test", d.test}, {"seed", d.seed}};
}

inline DataStamp data_stamp_from_json(const json& j) {
  return {j.at("source").get<std::string>(), j.at("rows").get<std::int64_t>(), j.at("train").get<std::int64_t>(),
          j.at("val").get<std::int64_t>(),   j.at("test").get<std::int64_t>(), j.at("seed").get<std::uint64_t>()};
}

struct MoeCheckpoint {
  std::string role;
  moe::MoeConfig cfg;
  FeatureSpec spec;
  Standardizer standardizer;
  DataStamp stamp;
  moe::MoeModel model;
};

struct EmCheckpoint {
  std::string role = "rome-em";
  em::EmConfig cfg;
  FeatureSpec spec;
  Standardizer standardizer;
  DataStamp stamp;
  MixtureParams params;
  RobustWeights weights;
  double loglik = 0.0;
};

inline json to_json(const MoeCheckpoint& ck) {
  return {{"format", "rome-checkpoint"},
          {"version", kCheckpointVersion},
          {"kind", "moe"},
          {"role", ck.role},
          {"config", to_json(ck.cfg)},
          {"feature_spec", to_json(ck.spec)},
          {"standardizer", to_json(ck.standardizer)},
          {"data", to_json(ck.stamp)},
          {"parameters", ck.model.flatten()}};
}

inline json to_json(const EmCheckpoint& ck) {
  return {{"format", "rome-checkpoint"},
          {"version", kCheckpointVersion},
          {"kind", "em"},
          {"role", ck.role},
          {"config", to_json(ck.cfg)},
          {"feature_spec", to_json(ck.spec)},
          {"standardizer", to_json(ck.standardizer)},
          {"data", to_json(ck.stamp)},
          {"gamma", to_json(ck.params.gamma)},
          {"omega", to_json(ck.params.omega)},
          {"v", to_json(ck.weights.v)},
          {"v0", to_json(ck.weights.v0)},
          {"c", ck.weights.c},
          {"objective", ck.weights.objective},
          {"loglik", ck.loglik}};
}

namespace detail {

inline json read_checkpoint(const std::string& path, const std::string& kind) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "rome-checkpoint") throw CompatibilityError("'" + path + "' is not a checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw CompatibilityError("checkpoint '" + path + "' has an unsupported version");
  if (j.value("kind", "") != kind) throw CompatibilityError("checkpoint '" + path + "' holds a " + j.value("kind", "?") + " model, expected " + kind);
  return j;
}

template <class Fn>
auto parse_fields(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path + "' is malformed: " + e.what());
  }
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

inline MoeCheckpoint load_moe_checkpoint(const std::string& path) {
  const json j = detail::read_checkpoint(path, "moe");
  MoeCheckpoint ck = detail::parse_fields(path, [&] {
    MoeCheckpoint c;
    c.role = j.at("role").get<std::string>();
    c.cfg = moe_config_from_json(j.at("config"));
    c.spec = feature_spec_from_json(j.at("feature_spec"));
    c.standardizer = standardizer_from_json(j.at("standardizer"));
    c.stamp = data_stamp_from_json(j.at("data"));
    return c;
  });
  const auto flat = detail::parse_fields(path, [&] { return j.at("parameters").get<std::vector<double>>(); });
  ck.model = moe::init_model(ck.spec, ck.cfg);
  if (flat.size() != ck.model.flatten().size()) {
    throw CompatibilityError("checkpoint '" + path + "': parameter count does not match its architecture");
  }
  ck.model.unflatten(flat);
  return ck;
}

inline EmCheckpoint load_em_checkpoint(const std::string& path) {
  const json j = detail::read_checkpoint(path, "em");
  return detail::parse_fields(path, [&] {
    EmCheckpoint c;
    c.role = j.at("role").get<std::string>();
    c.cfg = em_config_from_json(j.at("config"));
    c.spec = feature_spec_from_json(j.at("feature_spec"));
    c.standardizer = standardizer_from_json(j.at("standardizer"));
    c.stamp = data_stamp_from_json(j.at("data"));
    c.params.g = c.cfg.g;
    c.params.gamma = matrix_from_json(j.at("gamma"), static_cast<Index>(c.spec.mem_indices.size()));
    c.params.omega = matrix_from_json(j.at("omega"), static_cast<Index>(c.spec.design_dim()));
    c.weights.v = vector_from_json(j.at("v"));
    c.weights.v0 = vector_from_json(j.at("v0"));
    c.weights.c = j.at("c").get<double>();
    c.weights.objective = j.at("objective").get<double>();
    c.loglik = j.at("loglik").get<double>();
    if (c.params.omega.rows() != c.cfg.g || c.weights.v.size() != c.cfg.g) {
      throw CompatibilityError("checkpoint '" + path + "': group count does not match its parameters");
    }
    return c;
  });
}

}  // namespace rome::io
