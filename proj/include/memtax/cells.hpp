#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "memtax/cells/addressing.hpp"
#include "memtax/cells/common.hpp"
#include "memtax/cells/lstm.hpp"
#include "memtax/cells/ram.hpp"
#include "memtax/cells/rnn.hpp"
#include "memtax/cells/stack.hpp"

namespace memtax {

template <typename Cell>
concept RecurrentCell = requires(Tape& tape, const typename Cell::Config& cfg,
                                 const typename Cell::template Weights<Var>& w, const typename Cell::State& s, Var x,
                                 Initializer& init) {
  { Cell::kArch } -> std::convertible_to<Architecture>;
  { Cell::init(cfg, init) } -> std::same_as<typename Cell::template Weights<Tensor>>;
  { Cell::initial_state(tape, cfg) } -> std::same_as<typename Cell::State>;
  { Cell::step(tape, cfg, w, s, x) } -> std::same_as<typename Cell::StepResult>;
  { s.probes() } -> std::same_as<std::vector<Probe>>;
};

static_assert(RecurrentCell<RnnCell>);
static_assert(RecurrentCell<LstmCell>);
static_assert(RecurrentCell<StackCell>);
static_assert(RecurrentCell<RamCell>);

template <RecurrentCell Cell>
struct CellModel {
  using CellType = Cell;
  typename Cell::Config config;
  typename Cell::template Weights<Tensor> weights;

  friend bool operator==(const CellModel&, const CellModel&) = default;
};

using Model = std::variant<CellModel<RnnCell>, CellModel<LstmCell>, CellModel<StackCell>, CellModel<RamCell>>;

inline Architecture architecture(const Model& m) {
  return std::visit([](const auto& cm) { return std::remove_cvref_t<decltype(cm)>::CellType::kArch; }, m);
}

inline const Dims& dims(const Model& m) {
  return std::visit([](const auto& cm) -> const Dims& { return cm.config.dims; }, m);
}

// Architecture-independent description of a network, from which each
// cell's own configuration is derived.
struct NetworkConfig {
  Architecture arch = Architecture::Rnn;
  Dims dims;
  Activation hidden = Activation::Tanh;
  Activation candidate = Activation::Tanh;
  bool output_from_memory = false;  // LSTM only
  AddressingMode addressing;        // RAM only
  bool coupled = false;             // RAM only
  std::size_t max_stack_depth = 64; // stack only
  bool pin_read_gate = false;       // stack only: g_o = 1

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

inline RnnConfig rnn_config(const NetworkConfig& n) { return {n.dims, n.hidden}; }

inline LstmConfig lstm_config(const NetworkConfig& n) {
  LstmConfig c;
  c.dims = n.dims;
  c.hidden = n.hidden;
  c.candidate = n.candidate;
  c.output_from_memory = n.output_from_memory;
  return c;
}

inline StackConfig stack_config(const NetworkConfig& n) {
  StackConfig c;
  c.dims = n.dims;
  c.hidden = n.hidden;
  c.candidate = n.candidate;
  c.max_depth = n.max_stack_depth;
  if (n.pin_read_gate) c.pins.read = 1.0;
  return c;
}

inline RamConfig ram_config(const NetworkConfig& n) {
  RamConfig c;
  c.dims = n.dims;
  c.hidden = n.hidden;
  c.candidate = n.candidate;
  c.addressing = n.addressing;
  c.coupled = n.coupled;
  return c;
}

template <RecurrentCell Cell>
CellModel<Cell> init_model(const typename Cell::Config& cfg, std::uint64_t seed, InitMode mode) {
  Initializer init(seed, mode);
  return {cfg, Cell::init(cfg, init)};
}

// Reproducible in (config, seed, mode).
inline Model cell_init(const NetworkConfig& n, std::uint64_t seed, InitMode mode = InitMode::Scaled) {
  switch (n.arch) {
    case Architecture::Rnn: return init_model<RnnCell>(rnn_config(n), seed, mode);
    case Architecture::Lstm: return init_model<LstmCell>(lstm_config(n), seed, mode);
    case Architecture::Stack: return init_model<StackCell>(stack_config(n), seed, mode);
    case Architecture::Ram: return init_model<RamCell>(ram_config(n), seed, mode);
  }
  throw std::invalid_argument("unknown architecture");
}

template <RecurrentCell Cell>
struct Unrolled {
  std::vector<typename Cell::State> states;  // states[0] is the initial state
  std::vector<Var> outputs;
};

// Runs the cell over `inputs` on `tape`, starting from `initial`.
template <RecurrentCell Cell>
Unrolled<Cell> unroll_from(Tape& tape, const typename Cell::Config& cfg, const typename Cell::template Weights<Var>& w,
                           typename Cell::State initial, std::span<const Tensor> inputs) {
  Unrolled<Cell> u;
  u.states.reserve(inputs.size() + 1);
  u.outputs.reserve(inputs.size());
  u.states.push_back(std::move(initial));
  for (const Tensor& x : inputs) {
    auto r = Cell::step(tape, cfg, w, u.states.back(), tape.constant(x));
    u.states.push_back(std::move(r.state));
    u.outputs.push_back(r.output);
  }
  return u;
}

// Same, from the zero state.
template <RecurrentCell Cell>
Unrolled<Cell> unroll(Tape& tape, const typename Cell::Config& cfg, const typename Cell::template Weights<Var>& w,
                      std::span<const Tensor> inputs) {
  return unroll_from<Cell>(tape, cfg, w, Cell::initial_state(tape, cfg), inputs);
}

}  // namespace memtax
