#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hidfd/tensor.hpp"

namespace hidfd {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
};

// Records primitive operations in execution order and replays them in reverse
// to accumulate gradients. Not thread-safe; one tape per training step.
class Tape {
 public:
  using Inputs = std::span<const Tensor* const>;
  using ForwardFn = std::function<Tensor(Inputs)>;
  // grads[i] is nullptr when input i does not require a gradient.
  using BackwardFn =
      std::function<void(Inputs inputs, const Tensor& out, const Tensor& gout,
                         std::span<Tensor* const> grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var input(Tensor value, bool requires_grad);
  // Gradients reaching this leaf are also added into p.grad by backward().
  Var param(Parameter& p);

  Var record(std::string op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward);

  // Populates gradients for every node that depends on a requires_grad leaf.
  // Throws ContractError if loss is not a scalar recorded on this tape.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() loss with respect to v (zeros if none).
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;

  // Re-executes every recorded forward function from the stored leaves and
  // reports whether all node values are bit-identical to the recorded ones.
  bool replay_matches() const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(Var v) const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    ForwardFn forward;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  void check_owned(Var v, const char* what) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace hidfd
