#include "dft/tensor.hpp"

#include <unordered_set>

#include "dft/error.hpp"

namespace dft::ad {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e <= 0) fail(ErrorKind::Shape, "extents must be positive");
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

thread_local bool t_grad_enabled = true;

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->data.assign(shape_numel(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.mutable_data()) x = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    fail(ErrorKind::Shape, "data length does not match shape product");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Node& Tensor::node() const {
  if (!n_) fail(ErrorKind::Contract, "null tensor");
  return *n_;
}

int Tensor::rows() const {
  if (ndim() != 2) fail(ErrorKind::Contract, "rows() on non-2D tensor");
  return node().shape[0];
}

int Tensor::cols() const {
  if (ndim() != 2) fail(ErrorKind::Contract, "cols() on non-2D tensor");
  return node().shape[1];
}

std::span<const double> Tensor::grad() const {
  if (node().grad.empty()) fail(ErrorKind::Contract, "gradient not allocated");
  return node().grad;
}

void Tensor::zero_grad() const {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

double Tensor::value() const {
  if (numel() != 1) fail(ErrorKind::Contract, "value() on non-scalar tensor");
  return node().data[0];
}

Graph::Graph(const Tensor& root) : root_(root) {
  if (!root.valid()) fail(ErrorKind::Contract, "backward root is null");
  if (root.numel() != 1) fail(ErrorKind::Contract, "backward root must be scalar");

  // Iterative post-order DFS; parents are visited in their stored order so
  // the topological order (and therefore backward) is deterministic.
  struct Frame {
    Node* n;
    std::size_t next = 0;
  };
  std::unordered_set<Node*> visited;
  std::vector<Frame> stack;
  stack.push_back({&root.node()});
  visited.insert(&root.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (visited.insert(p).second) stack.push_back({p});
    } else {
      topo_.push_back(f.n);
      stack.pop_back();
    }
  }
}

void Graph::backward() {
  grad_buffer(root_.node())[0] += 1.0;
  for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
    Node& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

void backward(const Tensor& root) {
  Graph g(root);
  g.backward();
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace dft::ad
