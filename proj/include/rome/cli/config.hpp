#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "rome/dro_weights.hpp"
#include "rome/em_mixture.hpp"
#include "rome/error.hpp"
#include "rome/eval.hpp"
#include "rome/io/csv.hpp"
#include "rome/moe.hpp"
#include "rome/simgen.hpp"

namespace rome::cli {

using json = nlohmann::json;

/// Every recognised key with its default value. Config files and command-line
/// overrides may only set keys that appear here (free-form maps excepted).
inline json default_config() {
  const sim::SimSpec sim;
  const em::EmConfig em;
  const moe::MoeConfig moe;
  return json{
      {"output_dir", "rome_out"},
      {"threads", 1},
      {"seeds", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}},
      {"split", {{"train", 0.6}, {"val", 0.2}, {"test", 0.2}}},
      {"data",
       {{"source", "sim"},
        {"path", ""},
        {"a", json::array()},
        {"s", json::array()},
        {"y", ""},
        {"mem", json::array()},
        {"out", json::array()},
        {"sim", {{"n", 5000}, {"seed", 1}, {"noise_sd", sim.noise_sd}}}}},
      {"sim",
       {{"n", sim.n},
        {"n_test", sim.n_test},
        {"noise_sd", sim.noise_sd},
        {"misspec_rate", sim.misspec_rate},
        {"c_grid", dro::default_c_grid()}}},
      {"em",
       {{"g", 4},
        {"max_iter", em.max_iter},
        {"tau1", em.tau1},
        {"tau2", em.tau2},
        {"ridge", em.ridge},
        {"min_group_n", em.min_group_n},
        {"irls_max_iter", em.irls_max_iter},
        {"c", 0.5}}},
      {"moe",
       {{"g", 4},
        {"alpha", moe.alpha},
        {"lr", moe.lr},
        {"batch", moe.batch},
        {"epochs", moe.epochs},
        {"hidden_expert", moe.hidden_expert},
        {"hidden_gate", moe.hidden_gate},
        {"mask_threshold", moe.mask_threshold},
        {"optimizer", moe::to_string(moe.optimizer)},
        {"loss_target", moe::to_string(moe.loss_target)},
        {"roles", {"baseline-mlp", "baseline-mlp-fair", "vanilla-moe", "rome-moe-s", "rome-moe-as"}},
        {"role_params", json::object()}}},
      {"eval",
       {{"models", json::array()},
        {"baseline", "baseline-mlp-fair"},
        {"min_n", 30},
        {"r2_centering", "local"},
        {"schemes", json::array()},
        {"model_dir", ""}}},
      {"ablation", {{"alphas", {0.0, 0.05, 0.1, 0.2, 0.5, 1.0}}, {"variants", {"S", "AS"}}, {"scheme", ""}}},
  };
}

/// Keys whose object values are free-form maps.
inline bool free_form(const std::string& path) { return path == "moe.role_params"; }

namespace detail {

inline void check_known(const json& value, const json& defaults, const std::string& prefix) {
  if (!value.is_object() || !defaults.is_object() || free_form(prefix)) return;
  for (auto it = value.begin(); it != value.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown configuration key '" + path + "'");
    check_known(it.value(), defaults.at(it.key()), path);
  }
}

inline void merge(json& into, const json& from) {
  for (auto it = from.begin(); it != from.end(); ++it) {
    if (it.value().is_object() && into.contains(it.key()) && into.at(it.key()).is_object()) {
      merge(into[it.key()], it.value());
    } else {
      into[it.key()] = it.value();
    }
  }
}

inline json parse_scalar(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);
  }
}

}  // namespace detail

/// Resolves defaults, then the optional file, then `--dot.path value` pairs.
/// A key given more than once collects its values into an array; a single
/// value for an array-valued key becomes a one-element array.
inline json resolve_config(const std::string& file, const std::vector<std::string>& overrides) {
  const json defaults = default_config();
  json cfg = defaults;
  if (!file.empty()) {
    json from_file;
    try {
      from_file = json::parse(io::read_text(file));
    } catch (const json::exception& e) {
      throw ConfigError("config file '" + file + "' is not valid JSON: " + e.what());
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    if (!from_file.is_object()) throw ConfigError("config file '" + file + "' must hold an object");
    detail::check_known(from_file, defaults, "");
    detail::merge(cfg, from_file);
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<json>> values;
  for (std::size_t k = 0; k < overrides.size(); ++k) {
    const std::string& flag = overrides[k];
    if (flag.rfind("--", 0) != 0 || flag.size() <= 2) throw ConfigError("unexpected argument '" + flag + "'");
    std::string key = flag.substr(2), text;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      text = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (k + 1 >= overrides.size()) throw ConfigError("option '" + flag + "' needs a value");
      text = overrides[++k];
    }
    if (!values.count(key)) order.push_back(key);
    values[key].push_back(detail::parse_scalar(text));
  }
  for (const auto& key : order) {
    json::json_pointer ptr("/" + [&] {
      std::string p = key;
      for (auto& c : p) {
        if (c == '.') c = '/';
      }
      return p;
    }());
    const auto parent = ptr.parent_pointer();
    const bool in_free_form = [&] {
      auto p = parent;
      while (!p.empty()) {
        std::string dotted = p.to_string().substr(1);
        for (auto& c : dotted) {
          if (c == '/') c = '.';
        }
        if (free_form(dotted)) return true;
        p = p.parent_pointer();
      }
      return false;
    }();
    if (!in_free_form && !defaults.contains(ptr)) throw ConfigError("unknown configuration key '" + key + "'");
    const auto& vals = values.at(key);
    json v;
    if (vals.size() > 1) {
      v = json::array();
      for (const auto& x : vals) {
        if (x.is_array()) {
          v.insert(v.end(), x.begin(), x.end());
        } else {
          v.push_back(x);
        }
      }
    } else {
      v = vals.front();
      if (!in_free_form && defaults.at(ptr).is_array() && !v.is_array()) v = json::array({v});
    }
    cfg[ptr] = v;
  }
  return cfg;
}

/// Reads a typed value and converts JSON type errors into configuration errors.
template <class T>
T get(const json& cfg, const std::string& dotted) {
  std::string p = "/" + dotted;
  for (auto& c : p) {
    if (c == '.') c = '/';
  }
  try {
    return cfg.at(json::json_pointer(p)).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("configuration key '" + dotted + "': " + e.what());
  }
}

struct SplitFractions {
  double train = 0.6, val = 0.2, test = 0.2;

  void validate() const {
    if (!(train > 0 && val > 0 && test > 0)) throw ConfigError("split fractions must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  }
};

struct Split {
  std::vector<Index> train, val, test;
};

/// Seeded shuffle, then the first floor(train*n) rows train, the next
/// floor(val*n) validate and the rest test.
inline Split split_rows(Index n, const SplitFractions& f, std::uint64_t seed) {
  f.validate();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32), 3u};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  const auto ntr = static_cast<std::size_t>(std::floor(f.train * static_cast<double>(n)));
  const auto nva = static_cast<std::size_t>(std::floor(f.val * static_cast<double>(n)));
  if (ntr == 0 || ntr + nva >= order.size()) throw DataError("dataset too small for the requested split");
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(ntr));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(ntr), order.begin() + static_cast<std::ptrdiff_t>(ntr + nva));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(ntr + nva), order.end());
  return s;
}

inline std::vector<std::uint64_t> seeds(const json& cfg) {
  const auto s = get<std::vector<std::uint64_t>>(cfg, "seeds");
  if (s.empty()) throw ConfigError("at least one seed is required");
  return s;
}

inline SplitFractions split_fractions(const json& cfg) {
  SplitFractions f{get<double>(cfg, "split.train"), get<double>(cfg, "split.val"), get<double>(cfg, "split.test")};
  f.validate();
  return f;
}

inline em::EmConfig em_config(const json& cfg) {
  em::EmConfig c;
  c.g = get<int>(cfg, "em.g");
  c.max_iter = get<int>(cfg, "em.max_iter");
  c.tau1 = get<double>(cfg, "em.tau1");
  c.tau2 = get<double>(cfg, "em.tau2");
  c.ridge = get<double>(cfg, "em.ridge");
  c.min_group_n = get<int>(cfg, "em.min_group_n");
  c.irls_max_iter = get<int>(cfg, "em.irls_max_iter");
  c.validate();
  return c;
}

inline sim::SimSpec sim_spec(const json& cfg) {
  sim::SimSpec s;
  s.n = get<int>(cfg, "sim.n");
  s.n_test = get<int>(cfg, "sim.n_test");
  s.noise_sd = get<double>(cfg, "sim.noise_sd");
  s.misspec_rate = get<double>(cfg, "sim.misspec_rate");
  if (s.n < 1 || s.n_test < 1) throw ConfigError("sim.n and sim.n_test must be positive");
  s.validate();
  return s;
}

inline std::vector<double> c_grid(const json& cfg) {
  const auto grid = get<std::vector<double>>(cfg, "sim.c_grid");
  if (grid.empty()) throw ConfigError("sim.c_grid must not be empty");
  for (double c : grid) {
    if (!(c >= 0.0)) throw ConfigError("sim.c_grid values must be non-negative");
  }
  return grid;
}

/// Hyperparameters shared by all roles, with per-role overrides from
/// moe.role_params applied on top.
inline moe::MoeConfig moe_base(const json& cfg, const std::string& role = "") {
  json m = cfg.at("moe");
  if (!role.empty() && m.at("role_params").contains(role)) {
    const json& over = m.at("role_params").at(role);
    if (!over.is_object()) throw ConfigError("moe.role_params." + role + " must be an object");
    for (auto it = over.begin(); it != over.end(); ++it) {
      if (!m.contains(it.key()) || it.key() == "roles" || it.key() == "role_params") {
        throw ConfigError("unknown key moe.role_params." + role + "." + it.key());
      }
      m[it.key()] = it.value();
    }
  }
  json wrapped{{"moe", m}};
  moe::MoeConfig c;
  c.g = get<int>(wrapped, "moe.g");
  c.alpha = get<double>(wrapped, "moe.alpha");
  c.lr = get<double>(wrapped, "moe.lr");
  c.batch = get<int>(wrapped, "moe.batch");
  c.epochs = get<int>(wrapped, "moe.epochs");
  c.hidden_expert = get<int>(wrapped, "moe.hidden_expert");
  c.hidden_gate = get<int>(wrapped, "moe.hidden_gate");
  c.mask_threshold = get<double>(wrapped, "moe.mask_threshold");
  c.optimizer = moe::parse_optimizer(get<std::string>(wrapped, "moe.optimizer"));
  c.loss_target = moe::parse_loss_target(get<std::string>(wrapped, "moe.loss_target"));
  return c;
}

inline const std::vector<std::string>& known_roles() {
  static const std::vector<std::string> roles{"baseline-mlp", "baseline-mlp-fair", "vanilla-moe", "rome-moe-s", "rome-moe-as"};
  return roles;
}

/// The five model roles as configurations: the two baselines are the one-expert
/// degenerate cases with and without S in the expert input; the vanilla mixture
/// uses [A, S] gating and expert inputs with no worst-group term.
inline moe::MoeConfig role_config(const json& cfg, const std::string& role, std::uint64_t seed) {
  moe::MoeConfig c = moe_base(cfg, role);
  c.seed = seed;
  if (role == "baseline-mlp" || role == "baseline-mlp-fair") {
    c.g = 1;
    c.alpha = 0.0;
    c.variant = moe::Variant::S;
    c.expert_uses_s = role == "baseline-mlp";
  } else if (role == "vanilla-moe") {
    c.variant = moe::Variant::AS;
    c.alpha = 0.0;
    c.expert_uses_s = true;
  } else if (role == "rome-moe-s") {
    c.variant = moe::Variant::S;
  } else if (role == "rome-moe-as") {
    c.variant = moe::Variant::AS;
  } else {
    throw ConfigError("unknown model role '" + role + "'");
  }
  c.validate();
  return c;
}

inline std::vector<std::string> moe_roles(const json& cfg) {
  const auto roles = get<std::vector<std::string>>(cfg, "moe.roles");
  if (roles.empty()) throw ConfigError("moe.roles must not be empty");
  for (const auto& r : roles) role_config(cfg, r, 1);
  return roles;
}

/// Writes the resolved configuration, keys sorted, into the output directory.
inline void write_config_echo(const json& cfg, const std::string& dir) {
  io::write_text((std::filesystem::path(dir) / "config.json").string(), cfg.dump(2) + "\n");
}

inline std::string prepare_output_dir(const json& cfg) {
  const auto dir = get<std::string>(cfg, "output_dir");
  if (dir.empty()) throw ConfigError("output_dir must not be empty");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
  write_config_echo(cfg, dir);
  return dir;
}

}  // namespace rome::cli
