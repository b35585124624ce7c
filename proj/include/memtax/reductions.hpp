#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "memtax/cells.hpp"

namespace memtax {

enum class ReductionPair { RamToStack, StackToLstm, LstmToRnn, Chain };

inline constexpr ReductionPair kAllPairs[] = {ReductionPair::RamToStack, ReductionPair::StackToLstm,
                                              ReductionPair::LstmToRnn, ReductionPair::Chain};

inline const char* to_string(ReductionPair p) {
  switch (p) {
    case ReductionPair::RamToStack: return "ram-stack";
    case ReductionPair::StackToLstm: return "stack-lstm";
    case ReductionPair::LstmToRnn: return "lstm-rnn";
    case ReductionPair::Chain: return "chain";
  }
  return "?";
}

inline std::optional<ReductionPair> parse_pair(std::string_view s) {
  for (ReductionPair p : kAllPairs)
    if (s == to_string(p)) return p;
  return std::nullopt;
}

class ReductionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// LSTM that reproduces an RNN: g_i = 1, g_f = 0, g_o = 1 pinned, identity
// candidate c = h_{t-1}, so m' = h_{t-1} and the read path carries w_hh.
inline CellModel<LstmCell> constrain_lstm_to_rnn(const CellModel<RnnCell>& rnn) {
  const Dims& d = rnn.config.dims;
  CellModel<LstmCell> out;
  LstmConfig& c = out.config;
  c.dims = d;
  c.dims.width = d.hidden;  // N = K_h
  c.hidden = rnn.config.hidden;
  c.candidate = Activation::Identity;
  c.pins = {1.0, 0.0, 1.0};
  LstmWeights<Tensor>& w = out.weights;
  w.w_hc = Tensor::identity(d.hidden);
  w.b_c = Tensor::zeros(d.hidden);
  w.w_xh = rnn.weights.w_xh;
  w.w_rh = rnn.weights.w_hh;
  w.b_h = rnn.weights.b_h;
  w.w_ho = rnn.weights.w_ho;
  w.b_o = rnn.weights.b_o;
  return out;
}

// Stack that reproduces an LSTM: pop pinned to 0, push driven by the input
// gate, no-op by the forget gate, read gate = output gate. Only the top of
// the stack is ever non-zero, so it is kept alone.
inline CellModel<StackCell> constrain_stack_to_lstm(const CellModel<LstmCell>& lstm) {
  const LstmConfig& lc = lstm.config;
  if (lc.candidate_sees_input) throw ReductionError("stack candidate has no input term; disable candidate_sees_input");
  if (lc.output_from_memory) throw ReductionError("stack output is read from h; disable output_from_memory");
  const Dims& d = lc.dims;
  const LstmWeights<Tensor>& lw = lstm.weights;
  CellModel<StackCell> out;
  StackConfig& c = out.config;
  c.dims = d;
  c.hidden = lc.hidden;
  c.candidate = lc.candidate;
  c.top_only = true;
  c.pins.push = lc.pins.input;
  c.pins.pop = 0.0;
  c.pins.noop = lc.pins.forget;
  c.pins.read = lc.pins.output;

  auto stack3 = [](const Tensor& push, const Tensor& noop, std::size_t cols) {
    Tensor t(3, cols);
    for (std::size_t j = 0; j < cols; ++j) {
      if (!push.empty()) t(0, j) = push(0, j);
      if (!noop.empty()) t(2, j) = noop(0, j);
    }
    return t;
  };
  StackWeights<Tensor>& w = out.weights;
  w.w_xh = lw.w_xh;
  w.w_rh = lw.w_rh;
  w.b_h = lw.b_h;
  w.w_hd = stack3(lw.w_hgi, lw.w_hgf, d.hidden);
  w.w_xd = stack3(lw.w_xgi, lw.w_xgf, d.input);
  w.b_op = stack3(lw.b_gi.transposed(), lw.b_gf.transposed(), 1);
  w.w_hc = lw.w_hc;
  w.b_c = lw.b_c;
  if (!lc.pins.output) {
    w.w_hgo = lw.w_hgo;
    w.w_xgo = lw.w_xgo;
    w.b_go = lw.b_go;
  }
  w.w_ho = lw.w_ho;
  w.b_o = lw.b_o;
  return out;
}

// RAM that reproduces a stack over M slots (M - 1 stack positions plus the
// null slot). Every slot copies the top slot's gates; the read head puts the
// stack's read gate on slot 0 and the rest on the null slot.
inline CellModel<RamCell> constrain_ram_to_stack(const CellModel<StackCell>& stack, std::size_t slots) {
  const StackConfig& sc = stack.config;
  if (slots < 3) throw ReductionError("ram emulation of a stack needs at least 3 slots");
  if (sc.top_only && !(sc.pins.pop && *sc.pins.pop == 0.0)) {
    throw ReductionError("a top-only stack is only representable with pop pinned to 0");
  }
  const Dims& d = sc.dims;
  const StackWeights<Tensor>& sw = stack.weights;
  CellModel<RamCell> out;
  RamConfig& c = out.config;
  c.dims = d;
  c.dims.slots = slots;
  c.hidden = sc.hidden;
  c.candidate = sc.candidate;
  c.stack_emulation = RamStackEmulation{sc.pins};

  auto tile_row = [&](const Tensor& src, std::size_t row, std::size_t cols) {
    Tensor t(slots, cols);
    if (src.empty()) return t;
    for (std::size_t i = 0; i < slots; ++i)
      for (std::size_t j = 0; j < cols; ++j) t(i, j) = src(row, j);
    return t;
  };
  auto row_of = [](const Tensor& src, std::size_t row) { return src.row(row).transposed(); };

  RamWeights<Tensor>& w = out.weights;
  w.w_xh = sw.w_xh;
  w.w_rh = sw.w_rh;
  w.b_h = sw.b_h;
  w.w_hc = sw.w_hc;
  w.b_c = sw.b_c;
  w.w_hgi = tile_row(sw.w_hd, 0, d.hidden);
  w.w_xgi = tile_row(sw.w_xd, 0, d.input);
  w.b_gi = Tensor(slots, 1, sw.b_op[0]);
  w.w_hgf = tile_row(sw.w_hd, 2, d.hidden);
  w.w_xgf = tile_row(sw.w_xd, 2, d.input);
  w.b_gf = Tensor(slots, 1, sw.b_op[2]);
  w.w_hpop = row_of(sw.w_hd, 1);
  w.w_xpop = row_of(sw.w_xd, 1);
  w.b_pop = Tensor::scalar(sw.b_op[1]);
  if (!sc.pins.read) {
    w.w_ha = tile_row(sw.w_hgo, 0, d.hidden);
    w.b_a = Tensor(slots, 1, sw.b_go[0]);
    w.w_xa = sw.w_xgo;
  }
  w.w_ho = sw.w_ho;
  w.b_o = sw.b_o;
  return out;
}

// ------------------------------------------------------------------ verification

struct SeedDeviation {
  std::uint64_t seed = 0;
  double max_deviation = 0;
  std::vector<double> per_step;  // max |dh| at each step, t = 1..len
};

struct EquivalenceReport {
  ReductionPair pair = ReductionPair::LstmToRnn;
  std::size_t length = 0;
  double tolerance = 1e-10;
  double perturbation = 0;
  std::vector<SeedDeviation> seeds;
  std::vector<std::string> notes;

  double max_deviation() const {
    double m = 0;
    for (const SeedDeviation& s : seeds) m = std::max(m, s.max_deviation);
    return m;
  }
  bool equivalent() const {
    return std::all_of(seeds.begin(), seeds.end(), [&](const SeedDeviation& s) { return s.max_deviation < tolerance; });
  }
};

struct VerifyOptions {
  Dims dims{3, 4, 3, 3, 3};
  double tolerance = 1e-10;
  double perturbation = 0;  // added to one outer weight to probe sensitivity
  bool zero_inputs = false;
};

template <RecurrentCell Cell>
std::vector<Tensor> hidden_trajectory(const CellModel<Cell>& m, const std::vector<Tensor>& inputs) {
  Tape tape;
  const auto u = unroll<Cell>(tape, m.config, bind_constants(tape, m.weights), inputs);
  std::vector<Tensor> hs;
  for (std::size_t t = 1; t < u.states.size(); ++t) hs.push_back(tape.value(u.states[t].h));
  return hs;
}

namespace detail {

inline void accumulate(SeedDeviation& dev, const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (dev.per_step.size() < a.size()) dev.per_step.resize(a.size(), 0.0);
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double d = max_abs_diff(a[t], b[t]);
    dev.per_step[t] = std::max(dev.per_step[t], d);
    dev.max_deviation = std::max(dev.max_deviation, d);
  }
}

template <RecurrentCell Cell>
void perturb(CellModel<Cell>& m, double delta) {
  if (delta != 0) m.weights.w_xh[0] += delta;
}

}  // namespace detail

// Runs the constrained outer network and the inner network on the same
// random inputs and records the per-step max |h_outer - h_inner|.
inline EquivalenceReport verify_equivalence(ReductionPair pair, std::size_t length, std::span<const std::uint64_t> seeds,
                                            const VerifyOptions& opt = {}) {
  if (seeds.empty()) throw std::invalid_argument("verify_equivalence needs at least one seed");
  EquivalenceReport rep;
  rep.pair = pair;
  rep.length = length;
  rep.tolerance = opt.tolerance;
  rep.perturbation = opt.perturbation;
  if (pair == ReductionPair::LstmToRnn || pair == ReductionPair::Chain) {
    rep.notes.push_back("lstm output gate pinned to 1 so the read vector passes undamped");
  }
  if (pair == ReductionPair::RamToStack || pair == ReductionPair::Chain) {
    rep.notes.push_back("ram uses length + 2 slots: one per stack position reachable in the episode plus a null slot");
  }
  for (std::uint64_t seed : seeds) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<Tensor> inputs;
    for (std::size_t t = 0; t < length; ++t) {
      Tensor x(opt.dims.input, 1);
      if (!opt.zero_inputs)
        for (double& v : x.values()) v = nd(rng);
      inputs.push_back(x);
    }
    const std::uint64_t init_seed = seed * 2654435761ULL + 17;
    SeedDeviation dev;
    dev.seed = seed;
    const std::size_t slots = std::max<std::size_t>(length + 2, 3);
    switch (pair) {
      case ReductionPair::LstmToRnn: {
        const auto rnn = init_model<RnnCell>({opt.dims, Activation::Tanh}, init_seed, InitMode::Unit);
        auto lstm = constrain_lstm_to_rnn(rnn);
        detail::perturb(lstm, opt.perturbation);
        detail::accumulate(dev, hidden_trajectory(lstm, inputs), hidden_trajectory(rnn, inputs));
        break;
      }
      case ReductionPair::StackToLstm: {
        LstmConfig lc;
        lc.dims = opt.dims;
        const auto lstm = init_model<LstmCell>(lc, init_seed, InitMode::Unit);
        auto stack = constrain_stack_to_lstm(lstm);
        detail::perturb(stack, opt.perturbation);
        detail::accumulate(dev, hidden_trajectory(stack, inputs), hidden_trajectory(lstm, inputs));
        break;
      }
      case ReductionPair::RamToStack: {
        StackConfig sc;
        sc.dims = opt.dims;
        sc.max_depth = length + 1;
        const auto stack = init_model<StackCell>(sc, init_seed, InitMode::Unit);
        auto ram = constrain_ram_to_stack(stack, slots);
        detail::perturb(ram, opt.perturbation);
        detail::accumulate(dev, hidden_trajectory(ram, inputs), hidden_trajectory(stack, inputs));
        break;
      }
      case ReductionPair::Chain: {
        const auto rnn = init_model<RnnCell>({opt.dims, Activation::Tanh}, init_seed, InitMode::Unit);
        const auto lstm = constrain_lstm_to_rnn(rnn);
        const auto stack = constrain_stack_to_lstm(lstm);
        auto ram = constrain_ram_to_stack(stack, slots);
        detail::perturb(ram, opt.perturbation);
        const auto base = hidden_trajectory(rnn, inputs);
        detail::accumulate(dev, hidden_trajectory(lstm, inputs), base);
        detail::accumulate(dev, hidden_trajectory(stack, inputs), base);
        detail::accumulate(dev, hidden_trajectory(ram, inputs), base);
        break;
      }
    }
    rep.seeds.push_back(std::move(dev));
  }
  return rep;
}

}  // namespace memtax
