#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "memtax/tape.hpp"
#include "memtax/tensor.hpp"

namespace memtax {

enum class Architecture { Rnn, Lstm, Stack, Ram };

inline constexpr Architecture kAllArchitectures[] = {Architecture::Rnn, Architecture::Lstm, Architecture::Stack,
                                                     Architecture::Ram};

inline const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::Rnn: return "rnn";
    case Architecture::Lstm: return "lstm";
    case Architecture::Stack: return "stack";
    case Architecture::Ram: return "ram";
  }
  return "?";
}

inline std::optional<Architecture> parse_architecture(std::string_view s) {
  for (Architecture a : kAllArchitectures)
    if (s == to_string(a)) return a;
  return std::nullopt;
}

enum class Activation { Identity, Tanh, Sigmoid, Relu };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
  }
  return "?";
}

inline std::optional<Activation> parse_activation(std::string_view s) {
  for (Activation a : {Activation::Identity, Activation::Tanh, Activation::Sigmoid, Activation::Relu})
    if (s == to_string(a)) return a;
  return std::nullopt;
}

inline Var activate(Tape& tape, Activation a, Var v) {
  switch (a) {
    case Activation::Identity: return v;
    case Activation::Tanh: return tape.tanh(v);
    case Activation::Sigmoid: return tape.sigmoid(v);
    case Activation::Relu: return tape.relu(v);
  }
  return v;
}

// Layer sizes. `width` is the memory word size (N for the LSTM memory and the
// stack elements, W for RAM rows); `slots` is the RAM row count M.
struct Dims {
  std::size_t input = 3;
  std::size_t hidden = 3;
  std::size_t output = 3;
  std::size_t width = 3;
  std::size_t slots = 3;

  friend bool operator==(const Dims&, const Dims&) = default;
};

inline void require_positive(const Dims& d) {
  if (d.input == 0 || d.hidden == 0 || d.output == 0 || d.width == 0 || d.slots == 0) {
    throw std::invalid_argument("all dimensions must be positive");
  }
}

enum class InitMode { Scaled, Unit };

inline const char* to_string(InitMode m) { return m == InitMode::Unit ? "unit" : "scaled"; }

// Weights ~ N(0,1), divided by sqrt(fan-in) in Scaled mode; biases 0.1.
class Initializer {
 public:
  Initializer(std::uint64_t seed, InitMode mode) : rng_(seed), mode_(mode) {}

  Tensor weight(std::size_t rows, std::size_t cols) {
    Tensor t(rows, cols);
    const double k = mode_ == InitMode::Scaled ? 1.0 / std::sqrt(static_cast<double>(cols)) : 1.0;
    for (double& v : t.values()) v = normal_(rng_) * k;
    return t;
  }
  Tensor bias(std::size_t n, double value = 0.1) { return Tensor(n, 1, value); }

  InitMode mode() const { return mode_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  InitMode mode_;
};

// Weight structs are templated on the handle type: Tensor for stored values,
// Var once bound to a tape. Each one exposes `fields(self, f)` which calls
// f(name, member) for every member in a fixed order.
template <typename W, typename F>
void for_each_field(W& w, F&& f) {
  std::remove_cvref_t<W>::fields(w, std::forward<F>(f));
}

// Loads every non-empty weight onto the tape as a differentiable leaf.
template <template <typename> class W>
W<Var> bind(Tape& tape, const W<Tensor>& weights) {
  W<Var> out;
  std::vector<Var*> slots;
  for_each_field(out, [&](const char*, Var& v) { slots.push_back(&v); });
  std::size_t i = 0;
  for_each_field(weights, [&](const char*, const Tensor& t) {
    if (!t.empty()) *slots[i] = tape.parameter(t);
    ++i;
  });
  return out;
}

// Same as bind() but without gradient tracking, for evaluation.
template <template <typename> class W>
W<Var> bind_constants(Tape& tape, const W<Tensor>& weights) {
  W<Var> out;
  std::vector<Var*> slots;
  for_each_field(out, [&](const char*, Var& v) { slots.push_back(&v); });
  std::size_t i = 0;
  for_each_field(weights, [&](const char*, const Tensor& t) {
    if (!t.empty()) *slots[i] = tape.constant(t);
    ++i;
  });
  return out;
}

// Gradient of the root w.r.t. every bound weight, same layout as `weights`.
template <template <typename> class W>
W<Tensor> gather_gradients(const Gradients& grads, const W<Var>& bound) {
  W<Tensor> out;
  std::vector<Var> vars;
  for_each_field(bound, [&](const char*, const Var& v) { vars.push_back(v); });
  std::size_t i = 0;
  for_each_field(out, [&](const char*, Tensor& t) {
    if (vars[i].valid()) t = grads[vars[i]];
    ++i;
  });
  return out;
}

template <typename W>
std::vector<std::pair<std::string, Tensor*>> named_tensors(W& weights) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for_each_field(weights, [&](const char* name, Tensor& t) {
    if (!t.empty()) out.emplace_back(name, &t);
  });
  return out;
}

template <typename W>
std::vector<std::pair<std::string, const Tensor*>> named_tensors(const W& weights) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for_each_field(weights, [&](const char* name, const Tensor& t) {
    if (!t.empty()) out.emplace_back(name, &t);
  });
  return out;
}

// Pre-activation W_h h + W_x x + b; the summation order is shared by every
// cell so that constrained networks reproduce inner ones bit for bit.
inline Var two_input_affine(Tape& tape, Var w_a, Var a, Var w_b, Var b, Var bias) {
  return tape.add(tape.add(tape.matmul(w_a, a), tape.matmul(w_b, b)), bias);
}

// A gate either computed by `compute` or structurally pinned to a constant.
template <typename F>
Var gate_or_pin(Tape& tape, const std::optional<double>& pin, F&& compute) {
  if (pin) return tape.constant(Tensor::scalar(*pin));
  return compute();
}

inline Var one_minus(Tape& tape, Var v) {
  const Shape s = tape.shape(v);
  return tape.sub(tape.constant(Tensor::ones(s.rows, s.cols)), v);
}

inline void require_input_shape(const Tape& tape, Var x, std::size_t n) {
  if (tape.shape(x) != Shape{n, 1}) throw ShapeError("cell input has wrong shape", tape.shape(x), {n, 1});
}

// A named quantity exposed for traces.
struct Probe {
  const char* name;
  Var var;
};

}  // namespace memtax
