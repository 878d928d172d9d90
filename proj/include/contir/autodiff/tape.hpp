#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contir/autodiff/parameters.hpp"
#include "contir/autodiff/tensor.hpp"

namespace contir::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
/// tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// View handed to a backward rule: the incoming gradient of the node's output
/// and accumulators for the inputs that need one.
class BackwardContext {
 public:
  const Tensor& grad() const { return *grad_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(std::size_t k) const { return *inputs_[k]; }
  /// Accumulator for input k, or nullptr when that input has no gradient path.
  Tensor* input_grad(std::size_t k) const { return input_grads_[k]; }

 private:
  friend class Tape;
  const Tensor* grad_ = nullptr;
  const Tensor* output_ = nullptr;
  std::vector<const Tensor*> inputs_;
  std::vector<Tensor*> input_grads_;
};

using BackwardRule = std::function<void(const BackwardContext&)>;

/// The computation record for one forward/backward cycle. Operations append
/// nodes in execution order, so the node list is topologically sorted by
/// construction; backward() walks it once in reverse.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Registers a trainable leaf. Registering the same name twice returns the
  /// existing node.
  Var parameter(const std::string& name, const Tensor& value);

  /// Appends an operation node. Throws NumericError if `value` holds a NaN or
  /// infinity. When gradients are disabled, or no input needs one, the rule
  /// is dropped.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardRule rule,
             std::string_view op_name);

  /// Reverse accumulation from a scalar root. Returns one gradient per
  /// registered parameter; parameters without a path to the root get zeros.
  /// A tape can be differentiated once.
  GradientMap backward(const Var& root);

  bool grad_enabled() const noexcept { return grad_enabled_; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    bool requires_grad = false;
  };

  void check_owned(const Var& v, std::string_view op_name) const;

  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> parameters_;
  bool grad_enabled_;
  bool consumed_ = false;
};

using Bindings = std::map<std::string, Var>;

/// Registers every tensor of `params` on the tape.
Bindings bind_parameters(Tape& tape, const ParameterSet& params);

}  // namespace contir::ad
