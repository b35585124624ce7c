#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "memtax/tape.hpp"
#include "memtax/tensor.hpp"

namespace memtax {

enum class TaskKind { Count, CountInterf, Reverse, RepeatCopy };

inline constexpr TaskKind kAllTasks[] = {TaskKind::Count, TaskKind::CountInterf, TaskKind::Reverse,
                                         TaskKind::RepeatCopy};

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Count: return "count";
    case TaskKind::CountInterf: return "count-interf";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::RepeatCopy: return "repeat-copy";
  }
  return "?";
}

inline std::optional<TaskKind> parse_task(std::string_view s) {
  for (TaskKind k : kAllTasks)
    if (s == to_string(k)) return k;
  return std::nullopt;
}

enum class LossKind { SquaredError, CrossEntropy };

inline bool is_counting(TaskKind k) { return k == TaskKind::Count || k == TaskKind::CountInterf; }

// Symbols use a single-character notation: a-e, D (delimiter / repeat marker),
// E (start / end marker), '-' (don't care).
class UnknownSymbolError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TaskSpec {
  TaskKind kind = TaskKind::Count;
  std::size_t max_length = 20;  // body length for repeat-copy
  std::size_t min_repeat = 1;   // repeat-copy only
  std::size_t max_repeat = 4;
  std::uint64_t seed = 0;

  static TaskSpec defaults(TaskKind kind) {
    TaskSpec s;
    s.kind = kind;
    if (kind == TaskKind::RepeatCopy) s.max_length = 5;
    return s;
  }

  std::size_t alphabet() const { return is_counting(kind) ? 3 : 5; }
  std::size_t input_size() const {
    switch (kind) {
      case TaskKind::Count:
      case TaskKind::CountInterf: return 3;
      case TaskKind::Reverse: return 6;       // a-e, D
      case TaskKind::RepeatCopy: return 7;    // E, a-e, D
    }
    return 0;
  }
  std::size_t output_size() const { return is_counting(kind) ? 3 : 6; }
  LossKind loss() const { return is_counting(kind) ? LossKind::SquaredError : LossKind::CrossEntropy; }

  void validate() const {
    if (max_length < 1) throw std::invalid_argument("task max length must be at least 1");
    if (kind == TaskKind::RepeatCopy && (min_repeat < 1 || max_repeat < min_repeat || max_repeat > 9)) {
      throw std::invalid_argument("repeat range must satisfy 1 <= min <= max <= 9");
    }
  }

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct Episode {
  std::vector<Tensor> inputs;
  std::vector<Tensor> targets;
  std::vector<bool> mask;
  LossKind loss = LossKind::SquaredError;
  std::string notation;  // the input in symbol notation
  std::size_t delimiter = 0;  // index of the D step, for reverse and repeat-copy

  std::size_t size() const { return inputs.size(); }
  std::size_t masked_steps() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }
};

namespace detail {

inline Tensor one_hot(std::size_t n, std::size_t i, double value = 1.0) {
  Tensor t(n, 1);
  t[i] = value;
  return t;
}

inline std::size_t letter(char c) { return static_cast<std::size_t>(c - 'a'); }

}  // namespace detail

// Counting: target = [a-count so far, 1 if b, 1 if c].
// With interference the count is only reported on a steps.
inline Episode counting_episode(TaskKind kind, std::string_view symbols) {
  Episode e;
  e.loss = LossKind::SquaredError;
  e.notation = symbols;
  double count = 0;
  for (char ch : symbols) {
    if (ch < 'a' || ch > 'c') throw UnknownSymbolError(std::string("counting tasks accept a, b, c; got '") + ch + "'");
    const std::size_t i = detail::letter(ch);
    if (i == 0) ++count;
    Tensor target = detail::one_hot(3, i, i == 0 ? count : 1.0);
    if (kind == TaskKind::Count) target[0] = count;
    e.inputs.push_back(detail::one_hot(3, i));
    e.targets.push_back(target);
    e.mask.push_back(true);
  }
  return e;
}

// Reverse: the L body symbols, D, then L don't-care steps whose targets are
// the body in reverse order.
inline Episode reverse_episode(std::string_view body) {
  Episode e;
  e.loss = LossKind::CrossEntropy;
  for (char ch : body)
    if (ch < 'a' || ch > 'e') throw UnknownSymbolError(std::string("reverse body accepts a-e; got '") + ch + "'");
  const std::size_t len = body.size();
  e.notation = std::string(body) + "D" + std::string(len, '-');
  for (char ch : body) {
    e.inputs.push_back(detail::one_hot(6, detail::letter(ch)));
    e.targets.push_back(Tensor::zeros(6));
    e.mask.push_back(false);
  }
  e.delimiter = len;
  e.inputs.push_back(detail::one_hot(6, 5));
  e.targets.push_back(Tensor::zeros(6));
  e.mask.push_back(false);
  for (std::size_t j = 0; j < len; ++j) {
    e.inputs.push_back(Tensor::zeros(6));
    e.targets.push_back(detail::one_hot(6, detail::letter(body[len - 1 - j])));
    e.mask.push_back(true);
  }
  return e;
}

// Repeat copy: E, body, D carrying the repeat count n on its channel, then
// len*n + 1 don't-care steps whose targets are the body n times and E.
inline Episode repeat_copy_episode(std::string_view body, std::size_t repeats) {
  Episode e;
  e.loss = LossKind::CrossEntropy;
  for (char ch : body)
    if (ch < 'a' || ch > 'e') throw UnknownSymbolError(std::string("repeat-copy body accepts a-e; got '") + ch + "'");
  if (repeats < 1 || repeats > 9) throw std::invalid_argument("repeat count must be in 1..9");
  const std::size_t len = body.size();
  const std::size_t recall = len * repeats + 1;
  e.notation = "E" + std::string(body) + "D" + std::to_string(repeats) + std::string(recall, '-');
  auto quiet = [&](Tensor in) {
    e.inputs.push_back(std::move(in));
    e.targets.push_back(Tensor::zeros(6));
    e.mask.push_back(false);
  };
  quiet(detail::one_hot(7, 0));
  for (char ch : body) quiet(detail::one_hot(7, 1 + detail::letter(ch)));
  e.delimiter = e.inputs.size();
  quiet(detail::one_hot(7, 6, static_cast<double>(repeats)));
  for (std::size_t j = 0; j < recall; ++j) {
    e.inputs.push_back(Tensor::zeros(7));
    e.targets.push_back(detail::one_hot(6, j + 1 < recall ? detail::letter(body[j % len]) : 5));
    e.mask.push_back(true);
  }
  return e;
}

// Builds an episode from symbol notation. Reverse accepts "abc", "abcD" or
// "abcD---"; repeat-copy accepts "EabcD2" with optional leading E and
// trailing '-'.
inline Episode parse_episode(TaskKind kind, std::string_view text) {
  if (is_counting(kind)) return counting_episode(kind, text);
  std::size_t pos = 0;
  if (kind == TaskKind::RepeatCopy && pos < text.size() && text[pos] == 'E') ++pos;
  const std::size_t body_begin = pos;
  while (pos < text.size() && text[pos] >= 'a' && text[pos] <= 'e') ++pos;
  const std::string_view body = text.substr(body_begin, pos - body_begin);
  std::size_t repeats = 1;
  if (pos < text.size()) {
    if (text[pos] != 'D') throw UnknownSymbolError(std::string("unexpected symbol '") + text[pos] + "'");
    ++pos;
    if (kind == TaskKind::RepeatCopy) {
      if (pos >= text.size() || text[pos] < '1' || text[pos] > '9') {
        throw UnknownSymbolError("repeat marker D must be followed by a count 1-9");
      }
      repeats = static_cast<std::size_t>(text[pos] - '0');
      ++pos;
    }
  } else if (kind == TaskKind::RepeatCopy) {
    throw UnknownSymbolError("repeat-copy input needs a D<n> marker");
  }
  for (; pos < text.size(); ++pos)
    if (text[pos] != '-') throw UnknownSymbolError(std::string("unexpected symbol '") + text[pos] + "' after D");
  if (body.empty()) throw UnknownSymbolError("episode needs at least one body symbol");
  return kind == TaskKind::Reverse ? reverse_episode(body) : repeat_copy_episode(body, repeats);
}

// Seeded stream of random episodes. Lengths are uniform in [1, max_length].
class EpisodeGenerator {
 public:
  explicit EpisodeGenerator(TaskSpec spec) : spec_(spec), rng_(spec.seed) { spec_.validate(); }

  Episode next() {
    std::uniform_int_distribution<std::size_t> length(1, spec_.max_length);
    std::uniform_int_distribution<std::size_t> symbol(0, spec_.alphabet() - 1);
    const std::size_t len = length(rng_);
    std::string body(len, 'a');
    for (char& ch : body) ch = static_cast<char>('a' + symbol(rng_));
    switch (spec_.kind) {
      case TaskKind::Count:
      case TaskKind::CountInterf: return counting_episode(spec_.kind, body);
      case TaskKind::Reverse: return reverse_episode(body);
      case TaskKind::RepeatCopy: {
        std::uniform_int_distribution<std::size_t> reps(spec_.min_repeat, spec_.max_repeat);
        return repeat_copy_episode(body, reps(rng_));
      }
    }
    throw std::logic_error("unknown task");
  }

  std::vector<Episode> batch(std::size_t n) {
    std::vector<Episode> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

  const TaskSpec& spec() const { return spec_; }

 private:
  TaskSpec spec_;
  std::mt19937_64 rng_;
};

inline std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.values().begin(), t.values().end()) - t.values().begin());
}

inline char output_symbol(TaskKind kind, std::size_t index) {
  if (kind == TaskKind::Reverse) return index < 5 ? static_cast<char>('a' + index) : 'D';
  return index < 5 ? static_cast<char>('a' + index) : 'E';
}

inline std::string format_count(double v) {
  const double r = std::round(v);
  if (std::abs(v - r) < 1e-9 && r >= 0 && r < 10) return std::string(1, static_cast<char>('0' + static_cast<int>(r)));
  return "(" + std::to_string(v) + ")";
}

// Targets (or predictions) in symbol notation: the count channel for counting
// tasks, the argmax symbol on masked steps and '-' elsewhere otherwise.
inline std::string render(TaskKind kind, std::span<const Tensor> vectors, const std::vector<bool>& mask) {
  std::string out;
  for (std::size_t t = 0; t < vectors.size(); ++t) {
    if (is_counting(kind)) {
      const Tensor& v = vectors[t];
      if (kind == TaskKind::CountInterf && argmax(v) != 0) {
        out += argmax(v) == 1 ? 'b' : 'c';
      } else {
        out += format_count(v[0]);
      }
    } else {
      out += mask[t] ? output_symbol(kind, argmax(vectors[t])) : '-';
    }
  }
  return out;
}

struct EpisodeScore {
  double loss = 0;    // mean over masked steps
  double metric = 0;  // MSE for counting tasks, argmax accuracy otherwise
};

// Loss on the tape. Squared error is averaged over masked steps and output
// components; cross-entropy (after softmax) over masked steps.
inline Var episode_loss(Tape& tape, std::span<const Var> outputs, const Episode& e) {
  if (outputs.size() != e.size()) throw std::invalid_argument("predictions and targets differ in length");
  const std::size_t steps = e.masked_steps();
  if (steps == 0) throw std::invalid_argument("episode has an empty loss mask");
  std::vector<Var> terms;
  terms.reserve(steps);
  for (std::size_t t = 0; t < e.size(); ++t) {
    if (!e.mask[t]) continue;
    const Var target = tape.constant(e.targets[t]);
    terms.push_back(e.loss == LossKind::SquaredError ? tape.squared_error(outputs[t], target)
                                                     : tape.cross_entropy(tape.softmax(outputs[t]), target));
  }
  Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);
  const double per = e.loss == LossKind::SquaredError ? static_cast<double>(steps * e.targets[0].size())
                                                      : static_cast<double>(steps);
  return tape.scale(total, 1.0 / per);
}

// Success metric as a ratio: squared error over masked step components for
// counting tasks, correct argmax symbols over masked steps otherwise. Ratios
// from several episodes are pooled by adding numerators and denominators.
struct MetricSum {
  double numerator = 0;
  double denominator = 0;

  double value() const { return numerator / denominator; }
  MetricSum& operator+=(const MetricSum& o) {
    numerator += o.numerator;
    denominator += o.denominator;
    return *this;
  }
};

inline MetricSum episode_metric_sum(std::span<const Tensor> outputs, const Episode& e) {
  if (outputs.size() != e.size()) throw std::invalid_argument("predictions and targets differ in length");
  const std::size_t steps = e.masked_steps();
  if (steps == 0) throw std::invalid_argument("episode has an empty loss mask");
  MetricSum m;
  for (std::size_t t = 0; t < e.size(); ++t) {
    if (!e.mask[t]) continue;
    if (e.loss == LossKind::SquaredError) {
      for (std::size_t i = 0; i < outputs[t].size(); ++i) {
        const double d = outputs[t][i] - e.targets[t][i];
        m.numerator += d * d;
      }
      m.denominator += static_cast<double>(outputs[t].size());
    } else {
      m.numerator += argmax(outputs[t]) == argmax(e.targets[t]) ? 1.0 : 0.0;
      m.denominator += 1.0;
    }
  }
  return m;
}

inline double episode_metric(std::span<const Tensor> outputs, const Episode& e) {
  return episode_metric_sum(outputs, e).value();
}

inline EpisodeScore score_episode(std::span<const Tensor> outputs, const Episode& e) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(outputs.size());
  for (const Tensor& o : outputs) vars.push_back(tape.constant(o));
  return {tape.value(episode_loss(tape, vars, e)).item(), episode_metric(outputs, e)};
}

}  // namespace memtax
