#pragma once

#include <vector>

#include "memtax/cells/common.hpp"

namespace memtax {

struct RnnConfig {
  Dims dims;
  Activation hidden = Activation::Tanh;

  friend bool operator==(const RnnConfig&, const RnnConfig&) = default;
};

// Weight matrices are stored (out x in): w_xh maps the input into the hidden layer.
template <typename T>
struct RnnWeights {
  T w_xh;  // K_h x K_i
  T w_hh;  // K_h x K_h
  T b_h;
  T w_ho;  // K_o x K_h
  T b_o;

  template <typename Self, typename F>
  static void fields(Self& s, F&& f) {
    f("w_xh", s.w_xh);
    f("w_hh", s.w_hh);
    f("b_h", s.b_h);
    f("w_ho", s.w_ho);
    f("b_o", s.b_o);
  }

  friend bool operator==(const RnnWeights&, const RnnWeights&) = default;
};

// h' = f(w_xh x + w_hh h + b_h),  o = w_ho h' + b_o
struct RnnCell {
  static constexpr Architecture kArch = Architecture::Rnn;
  using Config = RnnConfig;
  template <typename T>
  using Weights = RnnWeights<T>;

  struct State {
    Var h;
    std::vector<Probe> probes() const { return {{"h", h}}; }
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
    w.w_hh = init.weight(d.hidden, d.hidden);
    w.b_h = init.bias(d.hidden);
    w.w_ho = init.weight(d.output, d.hidden);
    w.b_o = init.bias(d.output);
    return w;
  }

  static State initial_state(Tape& tape, const Config& cfg) {
    return {tape.constant(Tensor::zeros(cfg.dims.hidden))};
  }

  static StepResult step(Tape& tape, const Config& cfg, const Weights<Var>& w, const State& s, Var x) {
    require_input_shape(tape, x, cfg.dims.input);
    const Var h = activate(tape, cfg.hidden, two_input_affine(tape, w.w_xh, x, w.w_hh, s.h, w.b_h));
    return {{h}, tape.affine(w.w_ho, h, w.b_o)};
  }
};

}  // namespace memtax
