#pragma once

#include <stdexcept>
#include <string>

#include "memtax/cells/common.hpp"

namespace memtax {

struct AddressingMode {
  enum class Kind { Direct, ContentLocation };
  Kind kind = Kind::Direct;
  double sharpness = 10.0;    // alpha, content focus
  std::size_t max_shift = 1;  // shifts range over -n..n

  static AddressingMode direct() { return {}; }
  static AddressingMode content_location(double alpha, std::size_t n) {
    return {Kind::ContentLocation, alpha, n};
  }
  std::size_t shift_count() const { return 2 * max_shift + 1; }
  bool is_direct() const { return kind == Kind::Direct; }

  friend bool operator==(const AddressingMode&, const AddressingMode&) = default;
};

inline const char* to_string(AddressingMode::Kind k) {
  return k == AddressingMode::Kind::Direct ? "direct" : "content-location";
}

inline void validate(const AddressingMode& mode, std::size_t slots) {
  if (mode.is_direct()) return;
  if (!(mode.sharpness > 0.0)) throw std::invalid_argument("content addressing needs sharpness > 0");
  if (mode.shift_count() > slots) {
    throw std::invalid_argument("invalid shift range: 2n+1 = " + std::to_string(mode.shift_count()) +
                                " exceeds " + std::to_string(slots) + " memory slots");
  }
}

// Content then location addressing over the rows of `memory`:
//   content(i) = softmax_i(alpha * cos(key, memory(i)))
//   blended    = gate * previous + (1 - gate) * content
//   result(i)  = sum_o blended(i - o mod M) * shift(o),  o in -n..n
// A zero-norm key or row has similarity 0, so an all-zero memory (or key)
// gives uniform content weights.
inline Var address_content_location(Tape& tape, Var memory, Var key, double sharpness, Var gate, Var shift,
                                    Var previous) {
  if (!(sharpness > 0.0)) throw std::invalid_argument("content addressing needs sharpness > 0");
  const std::size_t slots = tape.shape(memory).rows;
  if (tape.shape(previous) != Shape{slots, 1}) {
    throw ShapeError("previous weights must have one entry per slot", tape.shape(previous), {slots, 1});
  }
  if (tape.shape(gate) != Shape{1, 1}) throw ShapeError("interpolation gate must be scalar", tape.shape(gate), {1, 1});
  if (tape.shape(shift).rows > slots) {
    throw std::invalid_argument("invalid shift range: " + std::to_string(tape.shape(shift).rows) +
                                " shift entries for " + std::to_string(slots) + " slots");
  }
  const Var content = tape.softmax(tape.scale(tape.cosine_similarity(memory, key), sharpness));
  const Var blended = tape.add(tape.scale_by(gate, previous), tape.scale_by(one_minus(tape, gate), content));
  return tape.circular_convolve(blended, shift);
}

}  // namespace memtax
