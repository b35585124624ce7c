#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "memtax/cells.hpp"
#include "memtax/reductions.hpp"
#include "memtax/tasks.hpp"
#include "memtax/training.hpp"

namespace memtax {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

// Malformed model, config or trace input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Writes `path.tmp` and renames it over `path`, so readers never see a
// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(what + " is not valid JSON: " + e.what());
  }
}

// ------------------------------------------------------------------ small codecs

namespace detail {

template <typename T>
T get(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(where + ": bad '" + key + "': " + e.what());
  }
}

template <typename T>
void maybe(const Json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key)) out = get<T>(j, key, where);
}

inline Json pin_json(const std::optional<double>& p) { return p ? Json(*p) : Json(nullptr); }

inline std::optional<double> pin_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number()) throw FormatError(std::string("pin '") + key + "' must be a number or null");
  return j.at(key).get<double>();
}

inline Activation activation_from(const Json& j, const char* key, Activation fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto a = parse_activation(get<std::string>(j, key, where));
  if (!a) throw FormatError(where + ": unknown activation '" + j.at(key).get<std::string>() + "'");
  return *a;
}

inline Json dims_json(const Dims& d) {
  return {{"input", d.input}, {"hidden", d.hidden}, {"output", d.output}, {"width", d.width}, {"slots", d.slots}};
}

inline Dims dims_from(const Json& j, Dims d, const std::string& where) {
  maybe(j, "input", d.input, where);
  maybe(j, "hidden", d.hidden, where);
  maybe(j, "output", d.output, where);
  maybe(j, "width", d.width, where);
  maybe(j, "slots", d.slots, where);
  return d;
}

inline Json addressing_json(const AddressingMode& a) {
  return {{"kind", to_string(a.kind)}, {"sharpness", a.sharpness}, {"max_shift", a.max_shift}};
}

inline AddressingMode addressing_from(const Json& j, AddressingMode a, const std::string& where) {
  if (j.contains("kind")) {
    const auto kind = get<std::string>(j, "kind", where);
    if (kind == "direct") {
      a.kind = AddressingMode::Kind::Direct;
    } else if (kind == "content-location") {
      a.kind = AddressingMode::Kind::ContentLocation;
    } else {
      throw FormatError(where + ": unknown addressing kind '" + kind + "'");
    }
  }
  maybe(j, "sharpness", a.sharpness, where);
  maybe(j, "max_shift", a.max_shift, where);
  return a;
}

inline Json stack_pins_json(const StackPins& p) {
  return {{"push", pin_json(p.push)}, {"pop", pin_json(p.pop)}, {"noop", pin_json(p.noop)}, {"read", pin_json(p.read)}};
}

inline StackPins stack_pins_from(const Json& j) {
  return {pin_from(j, "push"), pin_from(j, "pop"), pin_from(j, "noop"), pin_from(j, "read")};
}

inline Json cell_config_json(const RnnConfig& c) {
  return {{"dims", dims_json(c.dims)}, {"hidden_activation", to_string(c.hidden)}};
}

inline Json cell_config_json(const LstmConfig& c) {
  return {{"dims", dims_json(c.dims)},
          {"hidden_activation", to_string(c.hidden)},
          {"candidate_activation", to_string(c.candidate)},
          {"output_from_memory", c.output_from_memory},
          {"candidate_sees_input", c.candidate_sees_input},
          {"pins", {{"input", pin_json(c.pins.input)}, {"forget", pin_json(c.pins.forget)},
                    {"output", pin_json(c.pins.output)}}}};
}

inline Json cell_config_json(const StackConfig& c) {
  return {{"dims", dims_json(c.dims)},
          {"hidden_activation", to_string(c.hidden)},
          {"candidate_activation", to_string(c.candidate)},
          {"pins", stack_pins_json(c.pins)},
          {"top_only", c.top_only},
          {"max_depth", c.max_depth}};
}

inline Json cell_config_json(const RamConfig& c) {
  return {{"dims", dims_json(c.dims)},
          {"hidden_activation", to_string(c.hidden)},
          {"candidate_activation", to_string(c.candidate)},
          {"addressing", addressing_json(c.addressing)},
          {"coupled", c.coupled},
          {"stack_emulation", c.stack_emulation ? stack_pins_json(c.stack_emulation->pins) : Json(nullptr)}};
}

inline void cell_config_from(const Json& j, RnnConfig& c) {
  const std::string w = "rnn config";
  c.dims = dims_from(get<Json>(j, "dims", w), c.dims, w);
  c.hidden = activation_from(j, "hidden_activation", c.hidden, w);
}

inline void cell_config_from(const Json& j, LstmConfig& c) {
  const std::string w = "lstm config";
  c.dims = dims_from(get<Json>(j, "dims", w), c.dims, w);
  c.hidden = activation_from(j, "hidden_activation", c.hidden, w);
  c.candidate = activation_from(j, "candidate_activation", c.candidate, w);
  maybe(j, "output_from_memory", c.output_from_memory, w);
  maybe(j, "candidate_sees_input", c.candidate_sees_input, w);
  if (j.contains("pins")) {
    const Json& p = j.at("pins");
    c.pins = {pin_from(p, "input"), pin_from(p, "forget"), pin_from(p, "output")};
  }
}

inline void cell_config_from(const Json& j, StackConfig& c) {
  const std::string w = "stack config";
  c.dims = dims_from(get<Json>(j, "dims", w), c.dims, w);
  c.hidden = activation_from(j, "hidden_activation", c.hidden, w);
  c.candidate = activation_from(j, "candidate_activation", c.candidate, w);
  if (j.contains("pins")) c.pins = stack_pins_from(j.at("pins"));
  maybe(j, "top_only", c.top_only, w);
  maybe(j, "max_depth", c.max_depth, w);
}

inline void cell_config_from(const Json& j, RamConfig& c) {
  const std::string w = "ram config";
  c.dims = dims_from(get<Json>(j, "dims", w), c.dims, w);
  c.hidden = activation_from(j, "hidden_activation", c.hidden, w);
  c.candidate = activation_from(j, "candidate_activation", c.candidate, w);
  if (j.contains("addressing")) c.addressing = addressing_from(j.at("addressing"), c.addressing, w);
  maybe(j, "coupled", c.coupled, w);
  if (j.contains("stack_emulation") && !j.at("stack_emulation").is_null()) {
    c.stack_emulation = RamStackEmulation{stack_pins_from(j.at("stack_emulation"))};
  }
}

inline Json tensor_json(const Tensor& t) {
  Json data = Json::array();
  for (double v : t.values()) data.push_back(v);
  return {{"shape", {t.rows(), t.cols()}}, {"data", std::move(data)}};
}

inline Tensor tensor_from(const Json& j, const std::string& name) {
  const std::string w = "weight " + name;
  const auto shape = get<std::vector<std::size_t>>(j, "shape", w);
  const auto data = get<std::vector<double>>(j, "data", w);
  if (shape.size() != 2 || shape[0] * shape[1] != data.size()) throw FormatError(w + ": shape does not match data");
  Tensor t(shape[0], shape[1]);
  std::copy(data.begin(), data.end(), t.values().begin());
  return t;
}

}  // namespace detail

// ------------------------------------------------------------------ model files

struct ModelFile {
  Model model;
  std::uint64_t init_seed = 0;
  InitMode init_mode = InitMode::Scaled;
  Json training;  // echo of the training config, null when untrained

  friend bool operator==(const ModelFile&, const ModelFile&) = default;
};

inline Json model_json(const ModelFile& f) {
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["architecture"] = to_string(architecture(f.model));
  std::visit(
      [&](const auto& cm) {
        j["config"] = detail::cell_config_json(cm.config);
        Json weights = Json::object();
        for (const auto& [name, t] : named_tensors(cm.weights)) weights[name] = detail::tensor_json(*t);
        j["weights"] = std::move(weights);
      },
      f.model);
  j["init"] = {{"seed", f.init_seed}, {"mode", to_string(f.init_mode)}};
  j["training"] = f.training;
  return j;
}

inline std::string save_model(const ModelFile& f) { return model_json(f).dump(1) + "\n"; }

namespace detail {

template <RecurrentCell Cell>
CellModel<Cell> cell_model_from(const Json& j) {
  CellModel<Cell> cm;
  cell_config_from(detail::get<Json>(j, "config", "model"), cm.config);
  const Json weights = detail::get<Json>(j, "weights", "model");
  if (!weights.is_object()) throw FormatError("model: 'weights' must be an object");
  std::size_t used = 0;
  for_each_field(cm.weights, [&](const char* name, Tensor& t) {
    if (weights.contains(name)) {
      t = tensor_from(weights.at(name), name);
      ++used;
    }
  });
  if (used != weights.size()) {
    for (const auto& [name, value] : weights.items()) {
      bool known = false;
      for_each_field(cm.weights, [&](const char* n, Tensor&) { known = known || name == n; });
      if (!known) throw FormatError("model: unknown weight '" + name + "' for " + to_string(Cell::kArch));
    }
  }
  return cm;
}

}  // namespace detail

inline ModelFile load_model(const std::string& text) {
  const Json j = parse_json(text, "model file");
  if (!j.is_object()) throw FormatError("model file must be a JSON object");
  const int version = detail::get<int>(j, "format_version", "model");
  if (version != kModelFormatVersion) throw FormatError("unsupported model format version " + std::to_string(version));
  const auto tag = detail::get<std::string>(j, "architecture", "model");
  const auto arch = parse_architecture(tag);
  if (!arch) throw FormatError("unknown architecture tag '" + tag + "'");
  ModelFile f;
  switch (*arch) {
    case Architecture::Rnn: f.model = detail::cell_model_from<RnnCell>(j); break;
    case Architecture::Lstm: f.model = detail::cell_model_from<LstmCell>(j); break;
    case Architecture::Stack: f.model = detail::cell_model_from<StackCell>(j); break;
    case Architecture::Ram: f.model = detail::cell_model_from<RamCell>(j); break;
  }
  if (j.contains("init")) {
    const Json& init = j.at("init");
    detail::maybe(init, "seed", f.init_seed, "model init");
    if (init.contains("mode")) {
      f.init_mode = detail::get<std::string>(init, "mode", "model init") == "unit" ? InitMode::Unit : InitMode::Scaled;
    }
  }
  if (j.contains("training")) f.training = j.at("training");
  return f;
}

// ------------------------------------------------------------------ training configs

inline Json config_json(const TrainConfig& c) {
  const NetworkConfig& n = c.network;
  return {{"architecture", to_string(n.arch)},
          {"task",
           {{"kind", to_string(c.task.kind)},
            {"max_length", c.task.max_length},
            {"min_repeat", c.task.min_repeat},
            {"max_repeat", c.task.max_repeat}}},
          {"network",
           {{"dims", detail::dims_json(n.dims)},
            {"hidden_activation", to_string(n.hidden)},
            {"candidate_activation", to_string(n.candidate)},
            {"output_from_memory", n.output_from_memory},
            {"addressing", detail::addressing_json(n.addressing)},
            {"coupled", n.coupled},
            {"max_stack_depth", n.max_stack_depth},
            {"pin_read_gate", n.pin_read_gate}}},
          {"optimizer",
           {{"kind", to_string(c.optimizer)},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"clip", c.clip}}},
          {"budget", c.budget},
          {"eval_every", c.eval_every},
          {"eval_episodes", c.eval_episodes},
          {"confirm_episodes", c.confirm_episodes},
          {"threshold", c.threshold},
          {"seed", c.seed},
          {"init", to_string(c.init_mode)},
          {"stop_on_success", c.stop_on_success}};
}

namespace detail {

inline void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + " must be a JSON object");
  for (const auto& [name, value] : j.items()) {
    bool ok = false;
    for (const char* k : keys) ok = ok || name == k;
    if (!ok) throw FormatError(where + ": unknown key '" + name + "'");
  }
}

}  // namespace detail

// Applies the keys present in `j` on top of `c`; absent keys keep their value.
// The architecture and task kind are fixed by the caller and may only be
// repeated, not changed.
inline void apply_config(TrainConfig& c, const Json& j) {
  detail::reject_unknown(j,
                         {"architecture", "task", "network", "optimizer", "budget", "eval_every", "eval_episodes",
                          "confirm_episodes", "threshold", "seed", "init", "stop_on_success"},
                         "config");
  if (j.contains("architecture") && j.at("architecture") != to_string(c.network.arch)) {
    throw FormatError("config architecture does not match --arch");
  }
  if (j.contains("task")) {
    const Json& t = j.at("task");
    detail::reject_unknown(t, {"kind", "max_length", "min_repeat", "max_repeat"}, "config task");
    if (t.contains("kind") && t.at("kind") != to_string(c.task.kind)) throw FormatError("config task does not match --task");
    detail::maybe(t, "max_length", c.task.max_length, "config task");
    detail::maybe(t, "min_repeat", c.task.min_repeat, "config task");
    detail::maybe(t, "max_repeat", c.task.max_repeat, "config task");
  }
  if (j.contains("network")) {
    const Json& n = j.at("network");
    const std::string w = "config network";
    detail::reject_unknown(n,
                           {"dims", "hidden_activation", "candidate_activation", "output_from_memory", "addressing",
                            "coupled", "max_stack_depth", "pin_read_gate"},
                           w);
    NetworkConfig& net = c.network;
    if (n.contains("dims")) {
      detail::reject_unknown(n.at("dims"), {"input", "hidden", "output", "width", "slots"}, w + " dims");
      net.dims = detail::dims_from(n.at("dims"), net.dims, w);
    }
    net.hidden = detail::activation_from(n, "hidden_activation", net.hidden, w);
    net.candidate = detail::activation_from(n, "candidate_activation", net.candidate, w);
    detail::maybe(n, "output_from_memory", net.output_from_memory, w);
    if (n.contains("addressing")) {
      detail::reject_unknown(n.at("addressing"), {"kind", "sharpness", "max_shift"}, w + " addressing");
      net.addressing = detail::addressing_from(n.at("addressing"), net.addressing, w);
    }
    detail::maybe(n, "coupled", net.coupled, w);
    detail::maybe(n, "max_stack_depth", net.max_stack_depth, w);
    detail::maybe(n, "pin_read_gate", net.pin_read_gate, w);
  }
  if (j.contains("optimizer")) {
    const Json& o = j.at("optimizer");
    const std::string w = "config optimizer";
    detail::reject_unknown(o, {"kind", "learning_rate", "beta1", "beta2", "epsilon", "clip"}, w);
    if (o.contains("kind")) {
      const auto k = parse_optimizer(detail::get<std::string>(o, "kind", w));
      if (!k) throw FormatError(w + ": unknown optimizer");
      c.optimizer = *k;
    }
    detail::maybe(o, "learning_rate", c.learning_rate, w);
    detail::maybe(o, "beta1", c.beta1, w);
    detail::maybe(o, "beta2", c.beta2, w);
    detail::maybe(o, "epsilon", c.epsilon, w);
    detail::maybe(o, "clip", c.clip, w);
  }
  detail::maybe(j, "budget", c.budget, "config");
  detail::maybe(j, "eval_every", c.eval_every, "config");
  detail::maybe(j, "eval_episodes", c.eval_episodes, "config");
  detail::maybe(j, "confirm_episodes", c.confirm_episodes, "config");
  detail::maybe(j, "threshold", c.threshold, "config");
  detail::maybe(j, "seed", c.seed, "config");
  detail::maybe(j, "stop_on_success", c.stop_on_success, "config");
  if (j.contains("init")) {
    const auto m = detail::get<std::string>(j, "init", "config");
    if (m != "unit" && m != "scaled") throw FormatError("config: init must be 'unit' or 'scaled'");
    c.init_mode = m == "unit" ? InitMode::Unit : InitMode::Scaled;
  }
}

// ------------------------------------------------------------------ curves

inline std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "episode,loss,success\n";
  for (const CurvePoint& p : curve) {
    out += std::to_string(p.episode) + "," + format_double(p.loss) + "," + format_double(p.success) + "\n";
  }
  return out;
}

// ------------------------------------------------------------------ traces

// Task a model was trained on: from its training echo when present,
// otherwise from the input width (counting and interference share it).
inline TaskKind model_task(const ModelFile& f) {
  if (f.training.is_object() && f.training.contains("task")) {
    if (const auto k = parse_task(f.training["task"].value("kind", ""))) return *k;
  }
  switch (dims(f.model).input) {
    case 6: return TaskKind::Reverse;
    case 7: return TaskKind::RepeatCopy;
    default: return TaskKind::Count;
  }
}

// Per-step input symbols; the repeat marker keeps its count ("D3").
inline std::vector<std::string> step_symbols(TaskKind kind, const Episode& e) {
  std::vector<std::string> out;
  const std::string& n = e.notation;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (kind == TaskKind::RepeatCopy && n[i] == 'D' && i + 1 < n.size()) {
      out.push_back(n.substr(i, 2));
      ++i;
    } else {
      out.emplace_back(1, n[i]);
    }
  }
  return out;
}

// Long-format CSV of every visible quantity at every step:
//   t,symbol,quantity,row,col,value
// Quantities are the cell's state probes plus the output vector.
inline std::string trace_csv(const Model& m, TaskKind kind, std::string_view input) {
  std::string out = "t,symbol,quantity,row,col,value\n";
  if (input.empty()) return out;
  const Episode e = parse_episode(kind, input);
  if (e.inputs.front().size() != dims(m).input) {
    throw std::invalid_argument(std::string("model input size does not fit task ") + to_string(kind));
  }
  const std::vector<std::string> symbols = step_symbols(kind, e);
  std::visit(
      [&](const auto& cm) {
        using Cell = typename std::remove_cvref_t<decltype(cm)>::CellType;
        Tape tape;
        const auto u = unroll<Cell>(tape, cm.config, bind_constants(tape, cm.weights), e.inputs);
        auto emit = [&](std::size_t t, const char* name, const Tensor& v) {
          for (std::size_t r = 0; r < v.rows(); ++r)
            for (std::size_t c = 0; c < v.cols(); ++c) {
              out += std::to_string(t) + "," + symbols[t - 1] + "," + name + "," + std::to_string(r) + "," +
                     std::to_string(c) + "," + format_double(v(r, c)) + "\n";
            }
        };
        for (std::size_t t = 1; t < u.states.size(); ++t) {
          for (const Probe& p : u.states[t].probes())
            if (p.var.valid()) emit(t, p.name, tape.value(p.var));
          emit(t, "output", tape.value(u.outputs[t - 1]));
        }
      },
      m);
  return out;
}

// ------------------------------------------------------------------ reduction reports

inline Json report_json(const EquivalenceReport& r) {
  Json seeds = Json::array();
  for (const SeedDeviation& s : r.seeds) {
    Json steps = Json::array();
    for (double d : s.per_step) steps.push_back(d);
    seeds.push_back({{"seed", s.seed}, {"max_deviation", s.max_deviation}, {"per_step", std::move(steps)}});
  }
  return {{"pair", to_string(r.pair)},
          {"length", r.length},
          {"tolerance", r.tolerance},
          {"perturbation", r.perturbation},
          {"max_deviation", r.max_deviation()},
          {"verdict", r.equivalent() ? "equivalent" : "not-equivalent"},
          {"notes", r.notes},
          {"seeds", std::move(seeds)}};
}

}  // namespace memtax
