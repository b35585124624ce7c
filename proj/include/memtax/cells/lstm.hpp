#pragma once

#include <optional>
#include <tuple>
#include <vector>

#include "memtax/cells/common.hpp"

namespace memtax {

// Structural overrides: a pinned gate bypasses its sigmoid entirely.
struct LstmGatePins {
  std::optional<double> input;
  std::optional<double> forget;
  std::optional<double> output;

  friend bool operator==(const LstmGatePins&, const LstmGatePins&) = default;
};

struct LstmConfig {
  Dims dims;  // width = N, the long-term memory size
  Activation hidden = Activation::Tanh;
  Activation candidate = Activation::Tanh;
  bool output_from_memory = false;      // o = w_mo m' + b_o instead of w_ho h' + b_o
  bool candidate_sees_input = false;    // adds a w_xc x term to the candidate
  LstmGatePins pins;

  friend bool operator==(const LstmConfig&, const LstmConfig&) = default;
};

// Gates are scalars: each gate row is 1 x K_h (hidden) and 1 x K_i (input).
template <typename T>
struct LstmWeights {
  T w_hc;  // N x K_h
  T b_c;
  T w_xc;  // N x K_i, only with candidate_sees_input
  T w_xh;  // K_h x K_i
  T w_rh;  // K_h x N
  T b_h;
  T w_hgi, w_xgi, b_gi;
  T w_hgf, w_xgf, b_gf;
  T w_hgo, w_xgo, b_go;
  T w_ho;  // K_o x K_h, output from hidden
  T w_mo;  // K_o x N, output from memory
  T b_o;

  template <typename Self, typename F>
  static void fields(Self& s, F&& f) {
    f("w_hc", s.w_hc);
    f("b_c", s.b_c);
    f("w_xc", s.w_xc);
    f("w_xh", s.w_xh);
    f("w_rh", s.w_rh);
    f("b_h", s.b_h);
    f("w_hgi", s.w_hgi);
    f("w_xgi", s.w_xgi);
    f("b_gi", s.b_gi);
    f("w_hgf", s.w_hgf);
    f("w_xgf", s.w_xgf);
    f("b_gf", s.b_gf);
    f("w_hgo", s.w_hgo);
    f("w_xgo", s.w_xgo);
    f("b_go", s.b_go);
    f("w_ho", s.w_ho);
    f("w_mo", s.w_mo);
    f("b_o", s.b_o);
  }

  friend bool operator==(const LstmWeights&, const LstmWeights&) = default;
};

// c = f_c(w_hc h + b_c)
// g_* = sigmoid(w_hg* h + w_xg* x + b_g*)
// m' = g_i c + g_f m,  r = m'
// h' = f(w_xh x + w_rh (g_o r) + b_h)
struct LstmCell {
  static constexpr Architecture kArch = Architecture::Lstm;
  using Config = LstmConfig;
  template <typename T>
  using Weights = LstmWeights<T>;

  struct State {
    Var h;
    Var m;
    Var c;
    Var g_i, g_f, g_o;
    std::vector<Probe> probes() const {
      return {{"h", h}, {"m", m}, {"c", c}, {"g_i", g_i}, {"g_f", g_f}, {"g_o", g_o}};
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
    w.w_hc = init.weight(d.width, d.hidden);
    w.b_c = init.bias(d.width);
    if (cfg.candidate_sees_input) w.w_xc = init.weight(d.width, d.input);
    w.w_xh = init.weight(d.hidden, d.input);
    w.w_rh = init.weight(d.hidden, d.width);
    w.b_h = init.bias(d.hidden);
    for (auto [wh, wx, b] : {std::tie(w.w_hgi, w.w_xgi, w.b_gi), std::tie(w.w_hgf, w.w_xgf, w.b_gf),
                             std::tie(w.w_hgo, w.w_xgo, w.b_go)}) {
      wh = init.weight(1, d.hidden);
      wx = init.weight(1, d.input);
      b = init.bias(1);
    }
    if (cfg.output_from_memory) {
      w.w_mo = init.weight(d.output, d.width);
    } else {
      w.w_ho = init.weight(d.output, d.hidden);
    }
    w.b_o = init.bias(d.output);
    return w;
  }

  static State initial_state(Tape& tape, const Config& cfg) {
    State s;
    s.h = tape.constant(Tensor::zeros(cfg.dims.hidden));
    s.m = tape.constant(Tensor::zeros(cfg.dims.width));
    return s;
  }

  static StepResult step(Tape& tape, const Config& cfg, const Weights<Var>& w, const State& s, Var x) {
    require_input_shape(tape, x, cfg.dims.input);
    State n;
    n.c = activate(tape, cfg.candidate,
                   cfg.candidate_sees_input ? two_input_affine(tape, w.w_hc, s.h, w.w_xc, x, w.b_c)
                                            : tape.affine(w.w_hc, s.h, w.b_c));
    auto gate = [&](Var wh, Var wx, Var b) { return tape.sigmoid(two_input_affine(tape, wh, s.h, wx, x, b)); };
    n.g_i = gate_or_pin(tape, cfg.pins.input, [&] { return gate(w.w_hgi, w.w_xgi, w.b_gi); });
    n.g_f = gate_or_pin(tape, cfg.pins.forget, [&] { return gate(w.w_hgf, w.w_xgf, w.b_gf); });
    n.g_o = gate_or_pin(tape, cfg.pins.output, [&] { return gate(w.w_hgo, w.w_xgo, w.b_go); });
    n.m = tape.add(tape.scale_by(n.g_i, n.c), tape.scale_by(n.g_f, s.m));
    const Var read = tape.scale_by(n.g_o, n.m);
    n.h = activate(tape, cfg.hidden, two_input_affine(tape, w.w_xh, x, w.w_rh, read, w.b_h));
    const Var out = cfg.output_from_memory ? tape.affine(w.w_mo, n.m, w.b_o) : tape.affine(w.w_ho, n.h, w.b_o);
    return {n, out};
  }
};

}  // namespace memtax
