#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "memtax/cells/common.hpp"

namespace memtax {

class StackOverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StackPins {
  std::optional<double> push;
  std::optional<double> pop;
  std::optional<double> noop;
  std::optional<double> read;  // read gate g_o

  friend bool operator==(const StackPins&, const StackPins&) = default;
};

struct StackConfig {
  Dims dims;  // width = element size
  Activation hidden = Activation::Tanh;
  Activation candidate = Activation::Tanh;
  StackPins pins;
  bool top_only = false;        // keep only s(0); deeper positions are identically zero
  std::size_t max_depth = 64;

  friend bool operator==(const StackConfig&, const StackConfig&) = default;
};

template <typename T>
struct StackWeights {
  T w_xh;  // K_h x K_i
  T w_rh;  // K_h x N
  T b_h;
  T w_hd;  // 3 x K_h, rows: push, pop, no-op
  T w_xd;  // 3 x K_i
  T b_op;  // 3
  T w_hc;  // N x K_h
  T b_c;
  T w_hgo, w_xgo, b_go;  // read gate
  T w_ho;
  T b_o;

  template <typename Self, typename F>
  static void fields(Self& s, F&& f) {
    f("w_xh", s.w_xh);
    f("w_rh", s.w_rh);
    f("b_h", s.b_h);
    f("w_hd", s.w_hd);
    f("w_xd", s.w_xd);
    f("b_op", s.b_op);
    f("w_hc", s.w_hc);
    f("b_c", s.b_c);
    f("w_hgo", s.w_hgo);
    f("w_xgo", s.w_xgo);
    f("b_go", s.b_go);
    f("w_ho", s.w_ho);
    f("b_o", s.b_o);
  }

  friend bool operator==(const StackWeights&, const StackWeights&) = default;
};

// Continuous stack. The stack is a (depth x N) matrix with row 0 on top.
//   d = sigmoid(w_hd h + w_xd x + b_op) = (push, pop, no-op)
//   c = f_c(w_hc h + b_c)
//   s'(0) = push c + pop s(1) + no-op s(0)
//   s'(i) = push s(i-1) + pop s(i+1) + no-op s(i)
//   r = g_o s'(0),  h' = f(w_xh x + w_rh r + b_h)
// Signals and candidate come from the previous hidden state; the read sees the
// updated stack.
struct StackCell {
  static constexpr Architecture kArch = Architecture::Stack;
  using Config = StackConfig;
  template <typename T>
  using Weights = StackWeights<T>;

  struct State {
    Var h;
    Var stack;
    Var r;
    Var c;
    Var push, pop, noop;
    Var g_o;
    std::vector<Probe> probes() const {
      return {{"h", h},       {"stack", stack}, {"r", r},     {"c", c},
              {"d_push", push}, {"d_pop", pop}, {"d_noop", noop}, {"g_o", g_o}};
    }
  };

  struct StepResult {
    State state;
    Var output;
  };

  static Weights<Tensor> init(const Config& cfg, Initializer& init) {
    require_positive(cfg.dims);
    const Dims& d = cfg.dims;
    Weights<Tensor> w;
    w.w_xh = init.weight(d.hidden, d.input);
    w.w_rh = init.weight(d.hidden, d.width);
    w.b_h = init.bias(d.hidden);
    w.w_hd = init.weight(3, d.hidden);
    w.w_xd = init.weight(3, d.input);
    w.b_op = init.bias(3);
    w.w_hc = init.weight(d.width, d.hidden);
    w.b_c = init.bias(d.width);
    w.w_hgo = init.weight(1, d.hidden);
    w.w_xgo = init.weight(1, d.input);
    w.b_go = init.bias(1);
    w.w_ho = init.weight(d.output, d.hidden);
    w.b_o = init.bias(d.output);
    return w;
  }

  // One zero element on the stack.
  static State initial_state(Tape& tape, const Config& cfg) {
    State s;
    s.h = tape.constant(Tensor::zeros(cfg.dims.hidden));
    s.stack = tape.constant(Tensor::zeros(1, cfg.dims.width));
    return s;
  }

  static std::size_t depth(const Tape& tape, const State& s) { return tape.shape(s.stack).rows; }

  static StepResult step(Tape& tape, const Config& cfg, const Weights<Var>& w, const State& s, Var x) {
    require_input_shape(tape, x, cfg.dims.input);
    const std::size_t width = cfg.dims.width;
    State n;

    const bool all_pinned = cfg.pins.push && cfg.pins.pop && cfg.pins.noop;
    Var signals;
    if (!all_pinned) signals = tape.sigmoid(two_input_affine(tape, w.w_hd, s.h, w.w_xd, x, w.b_op));
    n.push = gate_or_pin(tape, cfg.pins.push, [&] { return tape.slice_rows(signals, 0, 1); });
    n.pop = gate_or_pin(tape, cfg.pins.pop, [&] { return tape.slice_rows(signals, 1, 1); });
    n.noop = gate_or_pin(tape, cfg.pins.noop, [&] { return tape.slice_rows(signals, 2, 1); });
    n.c = activate(tape, cfg.candidate, tape.affine(w.w_hc, s.h, w.b_c));

    const std::size_t depth = tape.shape(s.stack).rows;
    const Var c_row = tape.transpose(n.c);
    if (cfg.top_only) {
      const Var below = tape.constant(Tensor::zeros(1, width));
      n.stack = tape.add(tape.add(tape.scale_by(n.push, c_row), tape.scale_by(n.pop, below)),
                         tape.scale_by(n.noop, s.stack));
    } else {
      if (depth + 1 > cfg.max_depth) {
        throw StackOverflowError("stack depth would exceed the configured cap of " + std::to_string(cfg.max_depth));
      }
      const Var pushed = tape.concat_rows({c_row, s.stack});
      const Var popped = depth > 1 ? tape.concat_rows({tape.slice_rows(s.stack, 1, depth - 1),
                                                       tape.constant(Tensor::zeros(2, width))})
                                   : tape.constant(Tensor::zeros(2, width));
      const Var kept = tape.concat_rows({s.stack, tape.constant(Tensor::zeros(1, width))});
      n.stack = tape.add(tape.add(tape.scale_by(n.push, pushed), tape.scale_by(n.pop, popped)),
                         tape.scale_by(n.noop, kept));
    }

    n.g_o = gate_or_pin(tape, cfg.pins.read, [&] {
      return tape.sigmoid(two_input_affine(tape, w.w_hgo, s.h, w.w_xgo, x, w.b_go));
    });
    n.r = tape.scale_by(n.g_o, tape.transpose(tape.slice_rows(n.stack, 0, 1)));
    n.h = activate(tape, cfg.hidden, two_input_affine(tape, w.w_xh, x, w.w_rh, n.r, w.b_h));
    return {n, tape.affine(w.w_ho, n.h, w.b_o)};
  }
};

}  // namespace memtax
