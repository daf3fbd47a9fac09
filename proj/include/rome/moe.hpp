#pragma once

// Mixture of experts trained on (1 - alpha) * average loss + alpha * worst
// soft-group loss. The gate sees S (or [A; S]); experts see A only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rome/core_model.hpp"
#include "rome/error.hpp"

namespace rome::moe {

enum class Variant { S, AS };
enum class Optimizer { Adam, Sgd };
/// What the per-group loss compares against y: the mixture prediction, or the
/// group's own expert output.
enum class LossTarget { Mixture, Expert };

inline std::string to_string(Variant v) { return v == Variant::S ? "S" : "AS"; }
inline std::string to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }
inline std::string to_string(LossTarget t) { return t == LossTarget::Mixture ? "mixture" : "expert"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "S" || s == "s") return Variant::S;
  if (s == "AS" || s == "as") return Variant::AS;
  throw ConfigError("moe: unknown variant '" + s + "' (expected S or AS)");
}
inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "adam") return Optimizer::Adam;
  if (s == "sgd") return Optimizer::Sgd;
  throw ConfigError("moe: unknown optimizer '" + s + "' (expected adam or sgd)");
}
inline LossTarget parse_loss_target(const std::string& s) {
  if (s == "mixture") return LossTarget::Mixture;
  if (s == "expert") return LossTarget::Expert;
  throw ConfigError("moe: unknown loss target '" + s + "' (expected mixture or expert)");
}

struct MoeConfig {
  int g = 2;
  Variant variant = Variant::S;
  double alpha = 0.05;
  double lr = 1e-3;
  int batch = 64;
  int epochs = 50;
  int hidden_expert = 64;  // 0 gives a linear expert
  int hidden_gate = 32;    // 0 gives a linear gate
  double mask_threshold = 0.1;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::Adam;
  bool expert_uses_s = false;  // only for the non-fair baselines
  LossTarget loss_target = LossTarget::Mixture;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (g < 1) throw ConfigError("moe: g must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("moe: alpha must lie in [0, 1]");
    if (batch < 1) throw ConfigError("moe: batch must be >= 1");
    if (epochs < 0) throw ConfigError("moe: epochs must be >= 0");
    if (!(lr >= 0.0)) throw ConfigError("moe: lr must be non-negative");
    if (hidden_expert < 0 || hidden_gate < 0) throw ConfigError("moe: hidden sizes must be non-negative");
    if (!(mask_threshold >= 0.0 && mask_threshold < 1.0)) throw ConfigError("moe: mask_threshold must lie in [0, 1)");
  }
};

struct Layer {
  Matrix w;  // out x in
  Vector b;
};

/// Fully connected network, rectifier on hidden layers, identity on the output.
struct Mlp {
  std::vector<Layer> layers;

  /// Layer inputs and hidden pre-activations kept for the backward pass.
  struct Cache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
  };

  Index input_dim() const { return layers.front().w.cols(); }
  Index output_dim() const { return layers.back().w.rows(); }

  Index param_count() const {
    Index n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }

  /// Weights and biases uniform on +-1/sqrt(fan_in).
  template <class Rng>
  static Mlp init(Index in, int hidden, Index out, Rng& rng) {
    Mlp m;
    std::vector<Index> dims{in};
    if (hidden > 0) dims.push_back(hidden);
    dims.push_back(out);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(dims[l], 1)));
      std::uniform_real_distribution<double> u(-bound, bound);
      Layer layer{Matrix(dims[l + 1], dims[l]), Vector(dims[l + 1])};
      for (Index i = 0; i < layer.w.rows(); ++i) {
        for (Index j = 0; j < layer.w.cols(); ++j) layer.w(i, j) = u(rng);
      }
      for (Index i = 0; i < layer.b.size(); ++i) layer.b(i) = u(rng);
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  Mlp zeros_like() const {
    Mlp z;
    for (const auto& l : layers) z.layers.push_back({Matrix::Zero(l.w.rows(), l.w.cols()), Vector::Zero(l.b.size())});
    return z;
  }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    rome::detail::require(x.cols() == input_dim(), "mlp: input width differs from the first layer");
    Matrix h = x;
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (cache) cache->inputs.push_back(h);
      Matrix z = h * layers[l].w.transpose();
      z.rowwise() += layers[l].b.transpose();
      if (l + 1 == layers.size()) return z;
      if (cache) cache->pre.push_back(z);
      h = z.cwiseMax(0.0);
    }
    return h;
  }

  /// Gradients of sum(d_out .* output) with respect to every weight.
  Mlp backward(const Cache& cache, const Matrix& d_out) const {
    Mlp grad = zeros_like();
    Matrix d = d_out;
    for (std::size_t k = layers.size(); k-- > 0;) {
      grad.layers[k].w = d.transpose() * cache.inputs[k];
      grad.layers[k].b = d.colwise().sum().transpose();
      if (k == 0) break;
      Matrix dh = d * layers[k].w;
      const Matrix& z = cache.pre[k - 1];
      d = (z.array() > 0.0).select(dh, 0.0);
    }
    return grad;
  }

  void append_to(std::vector<double>& flat) const {
    for (const auto& l : layers) {
      for (Index i = 0; i < l.w.rows(); ++i) {
        for (Index j = 0; j < l.w.cols(); ++j) flat.push_back(l.w(i, j));
      }
      for (Index i = 0; i < l.b.size(); ++i) flat.push_back(l.b(i));
    }
  }

  std::size_t read_from(const std::vector<double>& flat, std::size_t pos) {
    for (auto& l : layers) {
      for (Index i = 0; i < l.w.rows(); ++i) {
        for (Index j = 0; j < l.w.cols(); ++j) l.w(i, j) = flat.at(pos++);
      }
      for (Index i = 0; i < l.b.size(); ++i) l.b(i) = flat.at(pos++);
    }
    return pos;
  }
};

struct MoeModel {
  Mlp gate;
  std::vector<Mlp> experts;

  /// Experts first, in order, then the gate.
  std::vector<double> flatten() const {
    std::vector<double> flat;
    for (const auto& e : experts) e.append_to(flat);
    gate.append_to(flat);
    return flat;
  }

  void unflatten(const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (auto& e : experts) pos = e.read_from(flat, pos);
    pos = gate.read_from(flat, pos);
    rome::detail::require(pos == flat.size(), "moe: flat parameter vector has the wrong length");
  }

  MoeModel zeros_like() const {
    MoeModel z{gate.zeros_like(), {}};
    for (const auto& e : experts) z.experts.push_back(e.zeros_like());
    return z;
  }
};

struct BatchLoss {
  double l_avg = 0.0;
  double l_worst = 0.0;
  Vector l_per_group;
  double l_total = 0.0;
  int worst_index = -1;  // -1 when every membership set is empty
  std::vector<int> set_sizes;
};

struct ForwardResult {
  Vector predictions;
  Matrix gate_weights;   // B x G
  Matrix expert_out;     // B x G
  Mlp::Cache gate_cache;
  std::vector<Mlp::Cache> expert_caches;
};

struct Gradient {
  BatchLoss loss;
  MoeModel grad;
};

inline Index gate_input_dim(const FeatureSpec& spec, Variant v) {
  return static_cast<Index>(v == Variant::S ? spec.p_s() : spec.p_a() + spec.p_s());
}
inline Index expert_input_dim(const FeatureSpec& spec, bool expert_uses_s) {
  return static_cast<Index>(expert_uses_s ? spec.p_a() + spec.p_s() : spec.p_a());
}

inline Matrix gate_input(const Matrix& a, const Matrix& s, Variant v) {
  if (v == Variant::S) return s;
  Matrix x(a.rows(), a.cols() + s.cols());
  x << a, s;
  return x;
}

inline Matrix expert_input(const Matrix& a, const Matrix& s, bool expert_uses_s) {
  if (!expert_uses_s) return a;
  Matrix x(a.rows(), a.cols() + s.cols());
  x << a, s;
  return x;
}

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Experts are drawn first, in order, then the gate, all from one seeded stream.
inline MoeModel init_model(const FeatureSpec& spec, const MoeConfig& cfg) {
  cfg.validate();
  auto rng = detail::stream(cfg.seed, 1);
  MoeModel m;
  const Index ein = expert_input_dim(spec, cfg.expert_uses_s);
  for (int j = 0; j < cfg.g; ++j) m.experts.push_back(Mlp::init(ein, cfg.hidden_expert, 1, rng));
  m.gate = Mlp::init(gate_input_dim(spec, cfg.variant), cfg.hidden_gate, cfg.g, rng);
  return m;
}

inline ForwardResult forward(const MoeModel& model, const MoeConfig& cfg, const Matrix& a, const Matrix& s) {
  rome::detail::require(a.rows() == s.rows(), "moe forward: a and s have different row counts");
  rome::detail::require(static_cast<int>(model.experts.size()) == cfg.g, "moe forward: expert count differs from g");
  const Index bsz = a.rows();
  ForwardResult fr;
  fr.gate_weights = model.gate.forward(gate_input(a, s, cfg.variant), &fr.gate_cache);
  rome::detail::require(fr.gate_weights.cols() == cfg.g, "moe forward: gate output width differs from g");
  for (Index i = 0; i < bsz; ++i) {
    const double mx = fr.gate_weights.row(i).maxCoeff();
    fr.gate_weights.row(i) = (fr.gate_weights.row(i).array() - mx).exp();
    fr.gate_weights.row(i) /= fr.gate_weights.row(i).sum();
  }
  const Matrix xe = expert_input(a, s, cfg.expert_uses_s);
  fr.expert_out.resize(bsz, cfg.g);
  fr.expert_caches.resize(static_cast<std::size_t>(cfg.g));
  for (int j = 0; j < cfg.g; ++j) {
    fr.expert_out.col(j) = model.experts[static_cast<std::size_t>(j)].forward(xe, &fr.expert_caches[static_cast<std::size_t>(j)]).col(0);
  }
  fr.predictions.resize(bsz);
  for (Index i = 0; i < bsz; ++i) {
    double acc = 0.0;
    for (int j = 0; j < cfg.g; ++j) acc += fr.gate_weights(i, j) * fr.expert_out(i, j);
    fr.predictions(i) = acc;
  }
  return fr;
}

/// Masked soft-group losses. `expert_out` is only read for LossTarget::Expert.
inline BatchLoss group_losses(const Vector& predictions, const Matrix& gate_weights, const Vector& y, const MoeConfig& cfg,
                              const Matrix* expert_out = nullptr) {
  rome::detail::require(predictions.size() == y.size() && gate_weights.rows() == y.size(), "group_losses: length mismatch");
  const Index bsz = y.size();
  const Index g = gate_weights.cols();
  if (cfg.loss_target == LossTarget::Expert) rome::detail::require(expert_out != nullptr, "group_losses: expert outputs required");
  BatchLoss bl;
  bl.l_per_group = Vector::Zero(g);
  bl.set_sizes.assign(static_cast<std::size_t>(g), 0);
  double sse = 0.0;
  for (Index i = 0; i < bsz; ++i) {
    const double r = y(i) - predictions(i);
    sse += r * r;
  }
  bl.l_avg = sse / static_cast<double>(bsz);
  for (Index j = 0; j < g; ++j) {
    int count = 0;
    double acc = 0.0;
    for (Index i = 0; i < bsz; ++i) {
      if (gate_weights(i, j) > cfg.mask_threshold) {
        ++count;
        const double target = cfg.loss_target == LossTarget::Mixture ? predictions(i) : (*expert_out)(i, j);
        const double r = y(i) - target;
        acc += gate_weights(i, j) * r * r;
      }
    }
    bl.set_sizes[static_cast<std::size_t>(j)] = count;
    if (count > 0) {
      bl.l_per_group(j) = acc / count;
      if (bl.worst_index < 0 || bl.l_per_group(j) > bl.l_worst) {
        bl.l_worst = bl.l_per_group(j);
        bl.worst_index = static_cast<int>(j);
      }
    }
  }
  bl.l_total = (1.0 - cfg.alpha) * bl.l_avg + cfg.alpha * bl.l_worst;
  return bl;
}

/// Loss and exact gradients of l_total. Membership sets are constants and the
/// worst group is the single (lowest-index) argmax.
inline Gradient backward(const MoeModel& model, const MoeConfig& cfg, const Matrix& a, const Matrix& s, const Vector& y) {
  const ForwardResult fr = forward(model, cfg, a, s);
  Gradient out;
  out.loss = group_losses(fr.predictions, fr.gate_weights, y, cfg, &fr.expert_out);
  const Index bsz = y.size();
  const int g = cfg.g;
  const double bd = static_cast<double>(bsz);

  Vector d_pred(bsz);
  for (Index i = 0; i < bsz; ++i) d_pred(i) = (1.0 - cfg.alpha) * (2.0 * (fr.predictions(i) - y(i)) / bd);
  Matrix d_w = Matrix::Zero(bsz, g);    // direct terms on the gate weights
  Matrix d_f = Matrix::Zero(bsz, g);    // direct terms on expert outputs
  const int k = out.loss.worst_index;
  if (cfg.alpha != 0.0 && k >= 0) {
    const double scale = cfg.alpha / static_cast<double>(out.loss.set_sizes[static_cast<std::size_t>(k)]);
    for (Index i = 0; i < bsz; ++i) {
      const double wik = fr.gate_weights(i, k);
      if (!(wik > cfg.mask_threshold)) continue;
      if (cfg.loss_target == LossTarget::Mixture) {
        const double r = fr.predictions(i) - y(i);
        d_pred(i) += scale * wik * 2.0 * r;
        d_w(i, k) += scale * r * r;
      } else {
        const double r = fr.expert_out(i, k) - y(i);
        d_f(i, k) += scale * wik * 2.0 * r;
        d_w(i, k) += scale * r * r;
      }
    }
  }

  // Through the prediction: dyhat/dw_ij = f_ij, dyhat/df_ij = w_ij.
  Matrix d_logits(bsz, g);
  for (Index i = 0; i < bsz; ++i) {
    for (int j = 0; j < g; ++j) {
      d_w(i, j) += d_pred(i) * fr.expert_out(i, j);
      d_f(i, j) += d_pred(i) * fr.gate_weights(i, j);
    }
    const double dot = fr.gate_weights.row(i).dot(d_w.row(i));
    for (int j = 0; j < g; ++j) d_logits(i, j) = fr.gate_weights(i, j) * (d_w(i, j) - dot);
  }

  out.grad.gate = model.gate.backward(fr.gate_cache, d_logits);
  for (int j = 0; j < g; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    out.grad.experts.push_back(model.experts[ju].backward(fr.expert_caches[ju], d_f.col(j)));
  }
  return out;
}

inline Vector predict(const MoeModel& model, const MoeConfig& cfg, const Matrix& a, const Matrix& s) {
  return forward(model, cfg, a, s).predictions;
}

struct EpochLoss {
  double l_total = 0.0;
  double l_avg = 0.0;
  double l_worst = 0.0;
};

struct TrainResult {
  MoeModel model;
  std::vector<EpochLoss> trace;
};

/// Failure during training; carries the location.
class TrainingError : public NumericalError {
 public:
  TrainingError(int epoch, int batch, const std::string& what)
      : NumericalError("training failed at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " + what),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

namespace detail {

/// Elementwise update of a flat parameter vector.
class Stepper {
 public:
  explicit Stepper(const MoeConfig& cfg) : cfg_(cfg) {}

  void apply(std::vector<double>& params, const std::vector<double>& grad) {
    if (cfg_.optimizer == Optimizer::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.lr * grad[i];
      return;
    }
    if (m_.empty()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.adam_beta1 * m_[i] + (1.0 - cfg_.adam_beta1) * grad[i];
      v_[i] = cfg_.adam_beta2 * v_[i] + (1.0 - cfg_.adam_beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
    }
  }

 private:
  MoeConfig cfg_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

struct BatchRows {
  Matrix a, s;
  Vector y;
};

inline BatchRows gather(const Dataset& data, const std::vector<Index>& order, std::size_t begin, std::size_t end) {
  BatchRows b;
  const auto m = static_cast<Index>(end - begin);
  b.a.resize(m, data.a.cols());
  b.s.resize(m, data.s.cols());
  b.y.resize(m);
  for (std::size_t r = begin; r < end; ++r) {
    const auto i = order[r];
    const auto k = static_cast<Index>(r - begin);
    b.a.row(k) = data.a.row(i);
    b.s.row(k) = data.s.row(i);
    b.y(k) = data.y(i);
  }
  return b;
}

// Minibatch driver shared by the mixture and the single-network trainer.
template <class StepFn>
std::vector<EpochLoss> run_epochs(const Dataset& data, const MoeConfig& cfg, StepFn&& step) {
  auto shuffle_rng = stream(cfg.seed, 2);
  std::vector<Index> order(static_cast<std::size_t>(data.n()));
  std::iota(order.begin(), order.end(), Index{0});
  std::vector<EpochLoss> trace;
  const auto n = order.size();
  const auto bsz = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLoss acc;
    int batches = 0;
    for (std::size_t begin = 0; begin < n; begin += bsz) {
      const auto rows = gather(data, order, begin, std::min(n, begin + bsz));
      const BatchLoss bl = step(rows, epoch, batches);
      if (!std::isfinite(bl.l_total)) throw TrainingError(epoch, batches, "non-finite loss");
      acc.l_total += bl.l_total;
      acc.l_avg += bl.l_avg;
      acc.l_worst += bl.l_worst;
      ++batches;
    }
    if (batches > 0) {
      acc.l_total /= batches;
      acc.l_avg /= batches;
      acc.l_worst /= batches;
    }
    trace.push_back(acc);
  }
  return trace;
}

}  // namespace detail

using MoeObserver = std::function<void(const MoeModel&)>;
using MlpObserver = std::function<void(const Mlp&)>;

/// Minibatch training with a fresh shuffle per epoch. The observer, when set,
/// sees the model after every parameter update.
inline TrainResult train(const Dataset& data, const MoeConfig& cfg, const MoeObserver& observer = {}) {
  cfg.validate();
  data.validate();
  if (data.n() < 1) throw DataError("moe: empty training set");
  TrainResult res;
  res.model = init_model(data.spec, cfg);
  detail::Stepper stepper(cfg);
  std::vector<double> flat = res.model.flatten();
  res.trace = detail::run_epochs(data, cfg, [&](const detail::BatchRows& b, int epoch, int batch) {
    Gradient gr = backward(res.model, cfg, b.a, b.s, b.y);
    if (!std::isfinite(gr.loss.l_total)) throw TrainingError(epoch, batch, "non-finite loss");
    stepper.apply(flat, gr.grad.flatten());
    res.model.unflatten(flat);
    if (observer) observer(res.model);
    return gr.loss;
  });
  return res;
}

struct MlpTrainResult {
  Mlp model;
  std::vector<EpochLoss> trace;
};

/// Plain single-network least-squares regression on the expert input, using
/// the same initialisation stream, shuffling and update rule as train().
inline MlpTrainResult train_single_mlp(const Dataset& data, const MoeConfig& cfg, const MlpObserver& observer = {}) {
  cfg.validate();
  data.validate();
  if (data.n() < 1) throw DataError("mlp: empty training set");
  MlpTrainResult res;
  auto rng = detail::stream(cfg.seed, 1);
  res.model = Mlp::init(expert_input_dim(data.spec, cfg.expert_uses_s), cfg.hidden_expert, 1, rng);
  detail::Stepper stepper(cfg);
  std::vector<double> flat;
  res.model.append_to(flat);
  res.trace = detail::run_epochs(data, cfg, [&](const detail::BatchRows& b, int, int) {
    Mlp::Cache cache;
    const Vector pred = res.model.forward(expert_input(b.a, b.s, cfg.expert_uses_s), &cache).col(0);
    const Index bsz = b.y.size();
    const double bd = static_cast<double>(bsz);
    Vector d(bsz);
    double sse = 0.0;
    for (Index i = 0; i < bsz; ++i) {
      const double r = b.y(i) - pred(i);
      sse += r * r;
      d(i) = 2.0 * (pred(i) - b.y(i)) / bd;
    }
    const Mlp grad = res.model.backward(cache, d);
    std::vector<double> gflat;
    grad.append_to(gflat);
    stepper.apply(flat, gflat);
    res.model.read_from(flat, 0);
    if (observer) observer(res.model);
    BatchLoss bl;
    bl.l_avg = sse / bd;
    bl.l_total = bl.l_avg;
    return bl;
  });
  return res;
}

}  // namespace rome::moe
