#include "langseg/autodiff.hpp"

#include <unordered_set>

namespace langseg {

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool needs = false;
  for (const Var& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
    n->requires_grad = true;
  }
  return n;
}

void backward(const Var& loss) {
  if (!loss) throw ContractError("backward: null loss");
  if (loss->value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_to_string(loss->value.shape()));
  }
  if (!loss->requires_grad) return;  // constant loss, nothing on the tape

  // Iterative DFS postorder; reversed it yields consumers before inputs.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

void backward(const Var& loss, ParamStore& params) {
  backward(loss);
  for (const auto& [name, var] : params) {
    (void)name;
    var->ensure_grad();
  }
}

Var ParamStore::add(const std::string& name, Tensor init) {
  if (entries_.count(name)) throw ContractError("duplicate parameter name: " + name);
  Var v = make_leaf(std::move(init), true);
  entries_.emplace(name, v);
  return v;
}

const Var& ParamStore::var(const std::string& name) const { return lookup(name); }

const Var& ParamStore::lookup(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, var] : entries_) {
    (void)name;
    if (!var->grad.empty()) {
      std::fill(var->grad.values().begin(), var->grad.values().end(), 0.0);
    }
  }
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, var] : entries_) {
    (void)var;
    out.push_back(name);
  }
  return out;
}

}  // namespace langseg
