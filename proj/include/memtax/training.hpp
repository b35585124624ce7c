#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "memtax/cells.hpp"
#include "memtax/finite_diff.hpp"
#include "memtax/tasks.hpp"

namespace memtax {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { Sgd, Adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline std::optional<OptimizerKind> parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  return std::nullopt;
}

// Seeds for independent random streams derived from one user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { kTrainStream = 1, kHeldOutStream = 2, kConfirmStream = 3 };

struct TrainConfig {
  NetworkConfig network;
  TaskSpec task;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip = 10.0;
  std::size_t budget = 5000;
  std::size_t eval_every = 250;
  std::size_t eval_episodes = 50;
  std::size_t confirm_episodes = 200;
  double threshold = 0.1;  // MSE below it for counting tasks, accuracy above it otherwise
  std::uint64_t seed = 1;
  InitMode init_mode = InitMode::Scaled;
  // Stop at the first confirmed success; otherwise train the whole budget and
  // judge the final model on the confirmation set.
  bool stop_on_success = true;

  void validate() const {
    task.validate();
    if (!(learning_rate >= 0)) throw std::invalid_argument("learning rate must be non-negative");
    if (!(clip > 0)) throw std::invalid_argument("clip threshold must be positive");
    if (!(threshold > 0)) throw std::invalid_argument("success threshold must be positive");
    if (eval_every == 0 || eval_episodes == 0 || confirm_episodes == 0) {
      throw std::invalid_argument("evaluation sizes must be positive");
    }
    if (network.dims.input != task.input_size() || network.dims.output != task.output_size()) {
      throw std::invalid_argument(std::string("network input/output sizes do not fit task ") + to_string(task.kind));
    }
  }
};

inline bool is_success(TaskKind kind, double metric, double threshold) {
  return is_counting(kind) ? metric < threshold : metric > threshold;
}

// Per-task defaults: counting tasks use K = 3 everywhere; the sequence tasks
// use 64 hidden units and a 16 x 16 memory. The RNN uses relu for counting and
// sigmoid for the classification tasks.
inline TrainConfig default_config(Architecture arch, TaskKind kind) {
  TrainConfig c;
  c.task = TaskSpec::defaults(kind);
  c.network.arch = arch;
  c.network.dims.input = c.task.input_size();
  c.network.dims.output = c.task.output_size();
  if (is_counting(kind)) {
    c.network.dims.hidden = 3;
    c.network.dims.width = 3;
    c.network.dims.slots = 3;
    c.threshold = 0.1;
  } else {
    c.network.dims.hidden = 64;
    c.network.dims.width = 16;
    c.network.dims.slots = 16;
    c.threshold = 0.95;
  }
  if (arch == Architecture::Rnn) c.network.hidden = is_counting(kind) ? Activation::Relu : Activation::Sigmoid;
  if (arch == Architecture::Ram && !is_counting(kind)) {
    // Direct per-slot gates plateau near 0.76 on both sequence tasks.
    c.network.addressing = AddressingMode::content_location(10.0, 1);
    // A 20-symbol body does not fit in 16 rows.
    if (kind == TaskKind::Reverse) c.network.dims.slots = 24;
  }
  switch (kind) {
    case TaskKind::Count: c.budget = 5000; break;
    case TaskKind::CountInterf: c.budget = 20000; break;
    case TaskKind::Reverse: c.budget = 50000; break;
    case TaskKind::RepeatCopy: c.budget = 100000; break;
  }
  c.eval_every = is_counting(kind) ? 250 : 1000;
  return c;
}

template <RecurrentCell Cell>
using WeightsOf = typename Cell::template Weights<Tensor>;

// ------------------------------------------------------------------ optimizers

inline double global_norm(const std::vector<Tensor*>& grads) {
  double s = 0;
  for (const Tensor* g : grads) s += g->squared_norm();
  return std::sqrt(s);
}

// Scales all gradients by threshold / norm when the global L2 norm exceeds threshold.
inline double clip_gradients(const std::vector<Tensor*>& grads, double threshold) {
  if (!(threshold > 0)) throw std::invalid_argument("clip threshold must be positive");
  const double norm = global_norm(grads);
  if (norm > threshold) {
    const double k = threshold / norm;
    for (Tensor* g : grads) *g *= k;
  }
  return norm;
}

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i]->size(); ++j) (*params[i])[j] -= lr_ * (*grads[i])[j];
      return;
    }
    if (m_.empty()) {
      for (const Tensor* p : params) {
        m_.emplace_back(p->rows(), p->cols());
        v_.emplace_back(p->rows(), p->cols());
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = *grads[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m_[i][j] = beta1_ * m_[i][j] + (1 - beta1_) * g[j];
        v_[i][j] = beta2_ * v_[i][j] + (1 - beta2_) * g[j] * g[j];
        p[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
      }
    }
  }

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// ------------------------------------------------------------------ forward passes

template <RecurrentCell Cell>
std::vector<Tensor> predict(const CellModel<Cell>& m, const Episode& e) {
  Tape tape;
  const auto w = bind_constants(tape, m.weights);
  const auto u = unroll<Cell>(tape, m.config, w, e.inputs);
  std::vector<Tensor> out;
  out.reserve(u.outputs.size());
  for (Var v : u.outputs) out.push_back(tape.value(v));
  return out;
}

inline std::vector<Tensor> predict(const Model& m, const Episode& e) {
  return std::visit([&](const auto& cm) { return predict(cm, e); }, m);
}

// Success metric pooled over all masked steps of `episodes`.
inline double pooled_metric(const Model& m, const std::vector<Episode>& episodes) {
  MetricSum total;
  for (const Episode& e : episodes) total += episode_metric_sum(predict(m, e), e);
  return total.value();
}

// Success metric pooled over n fresh episodes drawn with `seed`.
inline double evaluate(const Model& m, TaskSpec spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("evaluate needs at least one episode");
  spec.seed = seed;
  EpisodeGenerator gen(spec);
  MetricSum total;
  for (std::size_t i = 0; i < n; ++i) {
    const Episode e = gen.next();
    total += episode_metric_sum(predict(m, e), e);
  }
  return total.value();
}

// Loss and parameter gradients for one episode.
template <RecurrentCell Cell>
std::pair<double, WeightsOf<Cell>> loss_and_gradients(const CellModel<Cell>& m, const Episode& e) {
  Tape tape;
  const auto w = bind(tape, m.weights);
  const auto u = unroll<Cell>(tape, m.config, w, e.inputs);
  const Var loss = episode_loss(tape, u.outputs, e);
  const Gradients g = tape.backward(loss);
  return {tape.value(loss).item(), gather_gradients(g, w)};
}

// ------------------------------------------------------------------ training

struct CurvePoint {
  std::size_t episode = 0;
  double loss = 0;     // mean training loss since the previous point
  double success = 0;  // held-out metric
};

struct TrainResult {
  Model model;
  std::vector<CurvePoint> curve;
  bool success = false;
  double metric = 0;  // confirmation metric if one ran last, otherwise the last held-out metric
  std::size_t episodes = 0;
};

using ProgressFn = std::function<void(const CurvePoint&)>;

template <RecurrentCell Cell>
TrainResult train_cell(CellModel<Cell> model, const TrainConfig& cfg, const ProgressFn& progress) {
  TaskSpec train_spec = cfg.task;
  train_spec.seed = derive_seed(cfg.seed, kTrainStream);
  EpisodeGenerator gen(train_spec);
  TaskSpec held_spec = cfg.task;
  held_spec.seed = derive_seed(cfg.seed, kHeldOutStream);
  const std::vector<Episode> held_out = EpisodeGenerator(held_spec).batch(cfg.eval_episodes);

  Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  std::vector<Tensor*> params;
  for (auto& [name, t] : named_tensors(model.weights)) params.push_back(t);

  TrainResult result;
  double window_loss = 0;
  std::size_t window = 0;
  std::size_t confirmations = 0;
  for (std::size_t ep = 1; ep <= cfg.budget; ++ep) {
    const Episode e = gen.next();
    auto [loss, grads] = loss_and_gradients(model, e);
    if (!std::isfinite(loss)) {
      throw DivergenceError("loss is not finite at episode " + std::to_string(ep) + " (input " + e.notation + ")");
    }
    std::vector<Tensor*> gs;
    for (auto& [name, t] : named_tensors(grads)) gs.push_back(t);
    clip_gradients(gs, cfg.clip);
    opt.step(params, gs);
    window_loss += loss;
    ++window;
    result.episodes = ep;

    if (ep % cfg.eval_every != 0 && ep != cfg.budget) continue;
    const Model current = model;
    CurvePoint p{ep, window_loss / static_cast<double>(window), pooled_metric(current, held_out)};
    if (!std::isfinite(p.success)) throw DivergenceError("held-out metric is not finite at episode " + std::to_string(ep));
    window_loss = 0;
    window = 0;
    result.curve.push_back(p);
    result.metric = p.success;
    if (progress) progress(p);
    if (cfg.stop_on_success && is_success(cfg.task.kind, p.success, cfg.threshold)) {
      result.metric = evaluate(current, cfg.task, cfg.confirm_episodes,
                               derive_seed(cfg.seed, kConfirmStream + 100 * confirmations++));
      if (is_success(cfg.task.kind, result.metric, cfg.threshold)) {
        result.success = true;
        break;
      }
    }
  }
  if (!cfg.stop_on_success) {
    result.metric = evaluate(model, cfg.task, cfg.confirm_episodes, derive_seed(cfg.seed, kConfirmStream));
    result.success = is_success(cfg.task.kind, result.metric, cfg.threshold);
  }
  result.model = std::move(model);
  return result;
}

inline TrainResult train(const TrainConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  const Model init = cell_init(cfg.network, cfg.seed, cfg.init_mode);
  if (cfg.budget == 0) {
    // Nothing trained, nothing to judge: report the held-out metric only.
    TrainResult r;
    r.model = init;
    r.metric = evaluate(init, cfg.task, cfg.eval_episodes, derive_seed(cfg.seed, kHeldOutStream));
    return r;
  }
  return std::visit([&](const auto& cm) { return train_cell(cm, cfg, progress); }, init);
}

// ------------------------------------------------------------------ gradient check

struct GradCheckResult {
  double max_relative_error = 0;
  std::string worst;  // "trial/parameter[index]"
};

// Compares tape gradients with extrapolated central differences for every
// parameter of the cell, on random parameters, inputs and targets unrolled for
// `steps` steps. RAM trials also start from a random memory.
inline GradCheckResult grad_check_cell(const NetworkConfig& net, std::uint64_t seed, std::size_t trials,
                                       std::size_t steps = 3) {
  if (trials == 0) throw std::invalid_argument("grad check needs at least one trial");
  GradCheckResult res;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Model model = cell_init(net, derive_seed(seed, trial), InitMode::Scaled);
    std::visit(
        [&](auto& cm) {
          using Cell = typename std::remove_cvref_t<decltype(cm)>::CellType;
          // Biases are randomized too so that every path carries signal.
          for (auto& [name, t] : named_tensors(cm.weights))
            if (t->cols() == 1)
              for (double& v : t->values()) v = 0.5 * nd(rng);
          std::vector<Tensor> inputs, targets;
          for (std::size_t s = 0; s < steps; ++s) {
            Tensor x(net.dims.input, 1), y(net.dims.output, 1);
            for (double& v : x.values()) v = nd(rng);
            for (double& v : y.values()) v = nd(rng);
            inputs.push_back(x);
            targets.push_back(y);
          }
          // A zero RAM memory stays rank one through the first writes, which
          // leaves key gradients near 1e-9, below what differences resolve.
          Tensor memory;
          if constexpr (std::is_same_v<Cell, RamCell>) {
            memory = Tensor(net.dims.slots, net.dims.width);
            for (double& v : memory.values()) v = 0.5 * nd(rng);
          }
          auto loss_of = [&](Tape& tape, const typename Cell::template Weights<Var>& w) {
            auto start = Cell::initial_state(tape, cm.config);
            if constexpr (std::is_same_v<Cell, RamCell>) start.memory = tape.constant(memory);
            const auto u = unroll_from<Cell>(tape, cm.config, w, std::move(start), inputs);
            Var total = tape.squared_error(u.outputs[0], tape.constant(targets[0]));
            for (std::size_t s = 1; s < steps; ++s)
              total = tape.add(total, tape.squared_error(u.outputs[s], tape.constant(targets[s])));
            return total;
          };
          Tape tape;
          const auto bound = bind(tape, cm.weights);
          const auto grads = gather_gradients(tape.backward(loss_of(tape, bound)), bound);
          const auto analytic = named_tensors(grads);
          auto params = named_tensors(cm.weights);
          for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor* slot = params[k].second;
            const Tensor original = *slot;
            const Tensor numeric = finite_diff_ridders(
                [&](const Tensor& probe) {
                  *slot = probe;
                  Tape t;
                  const double v = t.value(loss_of(t, bind_constants(t, cm.weights))).item();
                  *slot = original;
                  return v;
                },
                original);
            for (std::size_t i = 0; i < numeric.size(); ++i) {
              const double err = relative_error((*analytic[k].second)[i], numeric[i]);
              if (err > res.max_relative_error) {
                res.max_relative_error = err;
                res.worst = std::to_string(trial) + "/" + params[k].first + "[" + std::to_string(i) + "]";
              }
            }
          }
        },
        model);
  }
  return res;
}

}  // namespace memtax
