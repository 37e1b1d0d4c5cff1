#include "rtfm/graph.hpp"

#include <algorithm>
#include <string>

#include "rtfm/errors.hpp"

namespace rtfm::ad {

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Graph::check(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) {
    throw ContractError("variable does not belong to this graph");
  }
}

Var Graph::constant(Tensor value) {
  require_finite(value, "constant");
  Node n;
  n.owned = std::move(value);
  n.name = "constant";
  return push(std::move(n));
}

Var Graph::constant_ref(const Tensor& value) {
  require_finite(value, "constant");
  Node n;
  n.view = &value;
  n.name = "constant";
  return push(std::move(n));
}

Var Graph::variable(Tensor value) {
  require_finite(value, "variable");
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  n.name = "variable";
  return push(std::move(n));
}

Var Graph::parameter(Tensor& param) {
  require_finite(param, "parameter");
  Node n;
  n.view = &param;
  n.bound = &param;
  n.requires_grad = true;
  n.name = "parameter";
  return push(std::move(n));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn fn,
                  const char* op_name) {
  require_finite(value, op_name);
  Node n;
  n.owned = std::move(value);
  n.name = op_name;
  for (const auto& in : inputs) {
    check(in);
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Tensor& Graph::value(Var v) const {
  check(v);
  return nodes_[v.id].value();
}

bool Graph::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id].requires_grad;
}

std::span<const double> Graph::grad(Var v) const {
  check(v);
  return nodes_[v.id].grad;
}

std::span<double> Graph::grad_buffer(Var v) {
  check(v);
  auto& n = nodes_[v.id];
  if (n.grad.empty()) n.grad.assign(n.value().size(), 0.0);
  return n.grad;
}

void Graph::accumulate(Var v, std::span<const double> g) {
  check(v);
  if (!nodes_[v.id].requires_grad) return;
  auto buf = grad_buffer(v);
  if (buf.size() != g.size()) {
    throw DimensionError("gradient size mismatch in accumulate");
  }
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void Graph::backward(Var loss) {
  check(loss);
  if (nodes_[loss.id].value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(nodes_[loss.id].value().shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad.assign(1, 1.0);

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(n.grad);
    if (n.bound) {
      auto dst = n.bound->mutable_grad();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad[j];
    }
  }
}

void backward(Graph& graph, Var loss) { graph.backward(loss); }

}  // namespace rtfm::ad
