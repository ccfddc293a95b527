#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dft::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One tape node: value, optional gradient, and the rule that pushes the
/// gradient back into its parents. Data is immutable after creation except
/// for leaf tensors mutated between steps by the optimizer; grad is the only
/// slot written during backward.
struct Node {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  std::size_t numel() const noexcept { return data.size(); }
};

/// Allocate-on-demand zeroed gradient buffer. Only ever called for nodes
/// with requires_grad set.
inline std::vector<double>& grad_buffer(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
  return n.grad;
}

/// Value-semantics handle to a tape node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool valid() const noexcept { return n_ != nullptr; }
  const std::vector<int>& shape() const { return node().shape; }
  int ndim() const { return static_cast<int>(node().shape.size()); }
  std::size_t numel() const { return node().data.size(); }

  /// 2-D accessors; contract-checked.
  int rows() const;
  int cols() const;

  std::span<const double> data() const { return node().data; }
  std::span<double> mutable_data() const { return node().data; }
  bool requires_grad() const { return node().requires_grad; }
  bool has_grad() const { return !node().grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> grad_buffer() const { return ad::grad_buffer(node()); }
  void zero_grad() const;

  /// Scalar value; contract-checked numel == 1.
  double value() const;

  const char* op() const { return node().op; }
  Node& node() const;
  const NodePtr& handle() const { return n_; }

 private:
  NodePtr n_;
};

/// Topological view over every node reachable from a scalar root. Built
/// once per backward pass (dynamic tape); the reverse walk visits each node
/// exactly once and only after all of its consumers.
class Graph {
 public:
  explicit Graph(const Tensor& root);

  /// Seeds d(root)/d(root) = 1 and runs every backward rule in reverse
  /// topological order. Gradients accumulate additively; callers zero
  /// parameter grads between steps themselves.
  void backward();

  std::size_t size() const noexcept { return topo_.size(); }
  const std::vector<Node*>& nodes() const noexcept { return topo_; }

 private:
  Tensor root_;
  std::vector<Node*> topo_;  // parents before consumers; root last
};

/// Convenience: Graph(root).backward().
void backward(const Tensor& root);

/// Thread-local tape switch. While disabled, ops produce constant tensors
/// with no parents, so evaluation-only code pays no graph cost.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace dft::ad
