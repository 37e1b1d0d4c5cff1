#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rtfm/tensor.hpp"

namespace rtfm::ad {

class Graph;

/// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Tape of executed operations. Nodes are appended in execution order, so the
/// tape is topologically sorted by construction and backward is a single
/// reverse sweep.
///
/// Leaves created with `parameter()` or `constant_ref()` alias external
/// tensors; those tensors must outlive the graph and stay unmodified while it
/// is in use.
class Graph {
 public:
  /// Receives the gradient of the loss w.r.t. the node's output.
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Owned leaf that never receives gradient.
  Var constant(Tensor value);
  /// Non-owning leaf that never receives gradient.
  Var constant_ref(const Tensor& value);
  /// Owned leaf whose gradient can be read back through grad().
  Var variable(Tensor value);
  /// Non-owning leaf; backward() adds its gradient into `param.grad`.
  Var parameter(Tensor& param);

  /// Appends an operation result. `fn` may be empty when no input needs grad.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn,
             const char* op_name);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient of the last backward() loss w.r.t. `v`; empty if none reached.
  std::span<const double> grad(Var v) const;
  /// Adds `g` into the gradient buffer of `v` (no-op if `v` needs no grad).
  void accumulate(Var v, std::span<const double> g);
  /// Direct access to the gradient buffer of `v` for accumulation in place.
  std::span<double> grad_buffer(Var v);

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Folds a discrete decision of a non-smooth op (the branch taken, a
  /// selected index) into a running fingerprint. Two evaluations of one
  /// program with equal fingerprints took the same branch everywhere.
  void note_branch(std::uint64_t decision) noexcept {
    fingerprint_ = (fingerprint_ ^ decision) * 0x100000001b3ULL;
  }
  std::uint64_t branch_fingerprint() const noexcept { return fingerprint_; }

  /// Reverse-mode sweep from a scalar loss. Each node is visited once.
  void backward(Var loss);

 private:
  struct Node {
    Tensor owned;
    const Tensor* view = nullptr;
    Tensor* bound = nullptr;
    bool requires_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
    const char* name = "";

    const Tensor& value() const { return view ? *view : owned; }
  };

  Var push(Node node);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::uint64_t fingerprint_ = 0xcbf29ce484222325ULL;
};

/// Free-function form of Graph::backward.
void backward(Graph& graph, Var loss);

}  // namespace rtfm::ad
