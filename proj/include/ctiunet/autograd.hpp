#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "ctiunet/tensor.hpp"

namespace ctiunet {

// A trainable tensor with its gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor4 value);

  void zero_grad();
  void accumulate_grad(const Tensor4& g);

  std::string name;
  Tensor4 value;
  Tensor4 grad;
  // Set once a backward pass (or accumulate_grad) has written to grad;
  // cleared by zero_grad.
  bool has_grad = false;
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
struct Value {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor4& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode recorder. Nodes are appended in evaluation order and
// replayed backwards by backward().
class Tape {
 public:
  // grad_out, then one slot per input (nullptr when the input needs no
  // gradient).
  using BackwardFn =
      std::function<void(const Tensor4& grad_out, std::vector<Tensor4*>& grad_in)>;

  explicit Tape(bool requires_grad = true) : requires_grad_(requires_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value constant(Tensor4 t);
  Value parameter(Parameter& p);

  // Used by operations to append their result.
  Value record(Tensor4 out, const std::vector<Value>& inputs, BackwardFn fn);

  const Tensor4& value(Value v) const { return nodes_[v.id].value; }
  // Gradient of the last backward() target with respect to v; empty if v
  // did not influence it.
  const Tensor4& grad(Value v) const { return nodes_[v.id].grad; }

  // Seeds d(target)/d(target) = 1 for a single-element target and
  // accumulates into every reachable Parameter.
  void backward(Value target);

  bool requires_grad() const { return requires_grad_; }

  // Non-smooth operations (relu, clamps, argmax) mix their branch pattern
  // into this hash when tracking is on, so gradient checks can reject
  // perturbations that cross a kink.
  void track_kinks(bool on) { track_kinks_ = on; }
  bool tracking_kinks() const { return track_kinks_; }
  void mix_kink_bit(bool bit) {
    kink_hash_ = (kink_hash_ ^ (bit ? 0x9e3779b97f4a7c15ULL : 0x1ULL)) *
                 0x100000001b3ULL;
  }
  void mix_kink_index(std::uint64_t index) {
    kink_hash_ = (kink_hash_ ^ index) * 0x100000001b3ULL;
  }
  std::uint64_t kink_signature() const { return kink_hash_; }

 private:
  struct Node {
    Tensor4 value;
    Tensor4 grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  bool requires_grad_;
  bool track_kinks_ = false;
  std::uint64_t kink_hash_ = 0xcbf29ce484222325ULL;
  std::deque<Node> nodes_;
};

inline const Tensor4& Value::value() const { return tape->value(*this); }

}  // namespace ctiunet
