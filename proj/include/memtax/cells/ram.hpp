#pragma once

#include <optional>
#include <tuple>
#include <stdexcept>
#include <vector>

#include "memtax/cells/addressing.hpp"
#include "memtax/cells/common.hpp"
#include "memtax/cells/stack.hpp"

namespace memtax {

// Structural override that restricts the RAM to stack behavior: slots
// 0..M-2 hold stack positions, slot M-1 is a null slot that is never written.
// The read head puts weight a(0) on the top slot and 1 - a(0) on the null
// slot; every slot shares the top slot's input/forget gates, and the
// per-slot candidate is the shifted memory (push) plus the row below scaled
// by the pop/push ratio.
struct RamStackEmulation {
  StackPins pins;
  friend bool operator==(const RamStackEmulation&, const RamStackEmulation&) = default;
};

struct RamConfig {
  Dims dims;  // width = W (word size), slots = M
  AddressingMode addressing;
  bool coupled = false;  // g_f(i) = 1 - g_i(i)
  Activation hidden = Activation::Tanh;
  Activation candidate = Activation::Tanh;
  std::optional<RamStackEmulation> stack_emulation;

  friend bool operator==(const RamConfig&, const RamConfig&) = default;
};

template <typename T>
struct RamWeights {
  T w_xh;  // K_h x K_i
  T w_rh;  // K_h x W
  T b_h;
  T w_hc;  // W x K_h, one candidate shared by all slots
  T b_c;
  // per-slot write gates (M rows)
  T w_hgi, w_xgi, b_gi;
  T w_hgf, w_xgf, b_gf;
  // direct read head: a = softmax(w_ha h + b_a)
  T w_ha;  // M x K_h
  T b_a;
  // content/location read head: key, interpolation gate, shift logits
  T w_rk, b_rk, w_rg, b_rg, w_rs, b_rs;
  // content/location write head
  T w_wk, b_wk, w_wg, b_wg, w_ws, b_ws;
  // stack emulation extras: input term of the top read gate, pop gate
  T w_xa;
  T w_hpop, w_xpop, b_pop;
  T w_ho;
  T b_o;

  template <typename Self, typename F>
  static void fields(Self& s, F&& f) {
    f("w_xh", s.w_xh);
    f("w_rh", s.w_rh);
    f("b_h", s.b_h);
    f("w_hc", s.w_hc);
    f("b_c", s.b_c);
    f("w_hgi", s.w_hgi);
    f("w_xgi", s.w_xgi);
    f("b_gi", s.b_gi);
    f("w_hgf", s.w_hgf);
    f("w_xgf", s.w_xgf);
    f("b_gf", s.b_gf);
    f("w_ha", s.w_ha);
    f("b_a", s.b_a);
    f("w_rk", s.w_rk);
    f("b_rk", s.b_rk);
    f("w_rg", s.w_rg);
    f("b_rg", s.b_rg);
    f("w_rs", s.w_rs);
    f("b_rs", s.b_rs);
    f("w_wk", s.w_wk);
    f("b_wk", s.b_wk);
    f("w_wg", s.w_wg);
    f("b_wg", s.b_wg);
    f("w_ws", s.w_ws);
    f("b_ws", s.b_ws);
    f("w_xa", s.w_xa);
    f("w_hpop", s.w_hpop);
    f("w_xpop", s.w_xpop);
    f("b_pop", s.b_pop);
    f("w_ho", s.w_ho);
    f("b_o", s.b_o);
  }

  friend bool operator==(const RamWeights&, const RamWeights&) = default;
};

// Neural RAM with one read head and per-slot write gates.
//   c = f_c(w_hc h + b_c)
//   m'(i) = g_i(i) c + g_f(i) m(i)
//   r = sum_i a(i) m'(i)
//   h' = f(w_xh x + w_rh r + b_h)
// Direct mode: g_i, g_f are sigmoid gates of (h, x) and a = softmax(w_ha h + b_a).
// Content/location mode: g_i is the write head's weighting over the previous
// memory and a is the read head's weighting over the updated memory.
struct RamCell {
  static constexpr Architecture kArch = Architecture::Ram;
  using Config = RamConfig;
  template <typename T>
  using Weights = RamWeights<T>;

  struct State {
    Var h;
    Var memory;  // M x W
    Var read;    // a, M x 1
    Var write;   // g_i, M x 1
    Var forget;  // g_f, M x 1
    Var r;
    Var c;
    std::vector<Probe> probes() const {
      return {{"h", h}, {"memory", memory}, {"read", read}, {"write", write}, {"forget", forget}, {"r", r}, {"c", c}};
    }
  };

  struct StepResult {
    State state;
    Var output;
  };

  static void validate(const Config& cfg) {
    require_positive(cfg.dims);
    if (cfg.stack_emulation) {
      if (cfg.dims.slots < 3) throw std::invalid_argument("stack emulation needs at least 3 slots");
    } else {
      memtax::validate(cfg.addressing, cfg.dims.slots);
    }
  }

  static Weights<Tensor> init(const Config& cfg, Initializer& init) {
    validate(cfg);
    const Dims& d = cfg.dims;
    const std::size_t m = d.slots;
    Weights<Tensor> w;
    w.w_xh = init.weight(d.hidden, d.input);
    w.w_rh = init.weight(d.hidden, d.width);
    w.b_h = init.bias(d.hidden);
    w.w_hc = init.weight(d.width, d.hidden);
    w.b_c = init.bias(d.width);
    const bool direct = cfg.addressing.is_direct() || cfg.stack_emulation;
    if (direct) {
      w.w_hgi = init.weight(m, d.hidden);
      w.w_xgi = init.weight(m, d.input);
      w.b_gi = init.bias(m);
    }
    if (!cfg.coupled) {
      w.w_hgf = init.weight(m, d.hidden);
      w.w_xgf = init.weight(m, d.input);
      w.b_gf = init.bias(m);
    }
    if (direct) {
      w.w_ha = init.weight(m, d.hidden);
      w.b_a = init.bias(m);
    } else {
      const std::size_t shifts = cfg.addressing.shift_count();
      for (auto [wk, bk, wg, bg, ws, bs] : {std::tie(w.w_rk, w.b_rk, w.w_rg, w.b_rg, w.w_rs, w.b_rs),
                                            std::tie(w.w_wk, w.b_wk, w.w_wg, w.b_wg, w.w_ws, w.b_ws)}) {
        wk = init.weight(d.width, d.hidden);
        bk = init.bias(d.width);
        wg = init.weight(1, d.hidden);
        bg = init.bias(1);
        ws = init.weight(shifts, d.hidden);
        bs = init.bias(shifts);
      }
    }
    if (cfg.stack_emulation) {
      w.w_xa = init.weight(1, d.input);
      w.w_hpop = init.weight(1, d.hidden);
      w.w_xpop = init.weight(1, d.input);
      w.b_pop = init.bias(1);
    }
    w.w_ho = init.weight(d.output, d.hidden);
    w.b_o = init.bias(d.output);
    return w;
  }

  static State initial_state(Tape& tape, const Config& cfg) {
    const Dims& d = cfg.dims;
    Tensor first(d.slots, 1);
    first[0] = 1.0;
    State s;
    s.h = tape.constant(Tensor::zeros(d.hidden));
    s.memory = tape.constant(Tensor::zeros(d.slots, d.width));
    s.read = tape.constant(first);
    s.write = tape.constant(first);
    return s;
  }

  static StepResult step(Tape& tape, const Config& cfg, const Weights<Var>& w, const State& s, Var x) {
    require_input_shape(tape, x, cfg.dims.input);
    if (cfg.stack_emulation) return step_stack_emulation(tape, cfg, w, s, x);

    State n;
    n.c = activate(tape, cfg.candidate, tape.affine(w.w_hc, s.h, w.b_c));
    auto head = [&](Var memory, Var wk, Var bk, Var wg, Var bg, Var ws, Var bs, Var previous) {
      return address_content_location(tape, memory, tape.tanh(tape.affine(wk, s.h, bk)), cfg.addressing.sharpness,
                                      tape.sigmoid(tape.affine(wg, s.h, bg)),
                                      tape.softmax(tape.affine(ws, s.h, bs)), previous);
    };

    if (cfg.addressing.is_direct()) {
      n.write = tape.sigmoid(two_input_affine(tape, w.w_hgi, s.h, w.w_xgi, x, w.b_gi));
    } else {
      n.write = head(s.memory, w.w_wk, w.b_wk, w.w_wg, w.b_wg, w.w_ws, w.b_ws, s.write);
    }
    n.forget = cfg.coupled ? one_minus(tape, n.write)
                           : tape.sigmoid(two_input_affine(tape, w.w_hgf, s.h, w.w_xgf, x, w.b_gf));
    n.memory = tape.add(tape.matmul(n.write, tape.transpose(n.c)), tape.scale_rows(s.memory, n.forget));

    if (cfg.addressing.is_direct()) {
      n.read = tape.softmax(tape.affine(w.w_ha, s.h, w.b_a));
    } else {
      n.read = head(n.memory, w.w_rk, w.b_rk, w.w_rg, w.b_rg, w.w_rs, w.b_rs, s.read);
    }
    n.r = tape.matmul(tape.transpose(n.memory), n.read);
    n.h = activate(tape, cfg.hidden, two_input_affine(tape, w.w_xh, x, w.w_rh, n.r, w.b_h));
    return {n, tape.affine(w.w_ho, n.h, w.b_o)};
  }

 private:
  static StepResult step_stack_emulation(Tape& tape, const Config& cfg, const Weights<Var>& w, const State& s,
                                         Var x) {
    const Dims& d = cfg.dims;
    const std::size_t m = d.slots;
    const StackPins& pins = cfg.stack_emulation->pins;
    State n;

    auto top_gate = [&](Var wh, Var wx, Var b) {
      return tape.sigmoid(two_input_affine(tape, tape.slice_rows(wh, 0, 1), s.h, tape.slice_rows(wx, 0, 1), x,
                                           tape.slice_rows(b, 0, 1)));
    };
    const Var push = gate_or_pin(tape, pins.push, [&] { return top_gate(w.w_hgi, w.w_xgi, w.b_gi); });
    const Var pop = gate_or_pin(tape, pins.pop, [&] {
      return tape.sigmoid(two_input_affine(tape, w.w_hpop, s.h, w.w_xpop, x, w.b_pop));
    });
    const Var noop = gate_or_pin(tape, pins.noop, [&] { return top_gate(w.w_hgf, w.w_xgf, w.b_gf); });
    n.c = activate(tape, cfg.candidate, tape.affine(w.w_hc, s.h, w.b_c));

    // g_i(i) c(i) = push * shifted(i) + pop * below(i), i.e. candidate
    // c(i) = shifted(i) + (pop/push) below(i) with tied gates g_i(i) = push.
    const Var zero_row = tape.constant(Tensor::zeros(1, d.width));
    const Var shifted = tape.concat_rows({tape.transpose(n.c), tape.slice_rows(s.memory, 0, m - 2), zero_row});
    const Var below = tape.concat_rows({tape.slice_rows(s.memory, 1, m - 2), tape.constant(Tensor::zeros(2, d.width))});
    n.memory = tape.add(tape.add(tape.scale_by(push, shifted), tape.scale_by(pop, below)),
                        tape.scale_by(noop, s.memory));

    Tensor tie_top(m - 1, 1, 1.0);
    auto tied = [&](Var g) {
      return tape.concat_rows({tape.scale_by(g, tape.constant(tie_top)), tape.constant(Tensor::zeros(1))});
    };
    n.write = tied(push);
    n.forget = tied(noop);

    const Var top = gate_or_pin(tape, pins.read, [&] {
      return tape.sigmoid(two_input_affine(tape, tape.slice_rows(w.w_ha, 0, 1), s.h, w.w_xa, x,
                                           tape.slice_rows(w.b_a, 0, 1)));
    });
    n.read = tape.concat_rows({top, tape.constant(Tensor::zeros(m - 2)), one_minus(tape, top)});
    n.r = tape.matmul(tape.transpose(n.memory), n.read);
    n.h = activate(tape, cfg.hidden, two_input_affine(tape, w.w_xh, x, w.w_rh, n.r, w.b_h));
    return {n, tape.affine(w.w_ho, n.h, w.b_o)};
  }
};

}  // namespace memtax
