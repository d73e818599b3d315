#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "langseg/tensor.hpp"

namespace langseg {

struct Node;
using Var = std::shared_ptr<Node>;

// One recorded operation (or leaf) on the tape. Edges point from consumers to
// inputs, so releasing the loss Var frees the whole intermediate graph while
// parameter leaves survive inside their ParamStore.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily on first accumulation
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
  bool requires_grad = false;

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

Var make_leaf(Tensor value, bool requires_grad = false);

// Wraps an op result. If no parent requires a gradient the backprop closure is
// dropped and the node degenerates to a constant.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// reachable node that requires them; calling twice without resetting grads
// accumulates (documented behavior, not an error).
void backward(const Var& loss);

// Named parameter leaves with persistent gradient accumulators. Iteration is
// lexicographic by name.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Var& var(const std::string& name) const;
  Tensor& value(const std::string& name) { return lookup(name)->value; }
  const Tensor& value(const std::string& name) const { return lookup(name)->value; }
  // Materializes a zero gradient for untouched parameters.
  Tensor& grad(const std::string& name) { return lookup(name)->ensure_grad(); }

  void zero_grad();
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> names() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  const Var& lookup(const std::string& name) const;

  std::map<std::string, Var> entries_;
};

// Spec-shaped entry point: sweep plus materialized (zero) gradients for every
// registered parameter, touched or not.
void backward(const Var& loss, ParamStore& params);

}  // namespace langseg
