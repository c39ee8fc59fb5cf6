#include "delnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "delnet/error.hpp"

namespace delnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) {
    n *= extent;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void check_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + where);
    }
  }
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) {
    throw ShapeError("tensor rank must be at least 1");
  }
  for (auto extent : shape) {
    if (extent == 0) {
      throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
    }
  }
}

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  validate_shape(shape);
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) {
    node->grad.assign(node->data.size(), 0.0);
  }
  return node;
}

const detail::Node& require(const std::shared_ptr<detail::Node>& node) {
  if (!node) {
    throw Error("use of an undefined tensor");
  }
  return *node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_node(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_node(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_finite(data, "Tensor::from_data");
  return from_node(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return require(node_).shape; }

std::size_t Tensor::numel() const { return require(node_).data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[axis];
}

std::span<const double> Tensor::data() const { return require(node_).data; }

std::span<double> Tensor::mutable_data() {
  require(node_);
  if (node_->backward) {
    throw Error("mutable_data() on a non-leaf tensor");
  }
  return node_->data;
}

double Tensor::item() const {
  const auto& n = require(node_);
  if (n.data.size() != 1) {
    throw ShapeError("item() requires a single-element tensor, got " + shape_string(n.shape));
  }
  return n.data[0];
}

bool Tensor::requires_grad() const { return require(node_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  require(node_);
  if (node_->backward) {
    throw Error("set_requires_grad() on a non-leaf tensor");
  }
  node_->requires_grad = flag;
  if (flag) {
    node_->grad.assign(node_->data.size(), 0.0);
  } else {
    node_->grad.clear();
  }
}

bool Tensor::is_leaf() const { return !require(node_).backward; }

std::span<const double> Tensor::grad() const {
  const auto& n = require(node_);
  if (!n.requires_grad) {
    throw Error("tensor does not require grad");
  }
  return n.grad;
}

std::span<double> Tensor::mutable_grad() {
  require(node_);
  if (!node_->requires_grad) {
    throw Error("tensor does not require grad");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  require(node_);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  const auto& root = require(node_);
  if (root.data.size() != 1) {
    throw ShapeError("backward() requires a scalar, got " + shape_string(root.shape));
  }
  if (!root.requires_grad) {
    throw Error("backward() on a tensor that does not require grad");
  }

  // Iterative post-order DFS over the grad-requiring subgraph.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (node->backward) {
      node->grad.assign(node->data.size(), 0.0);
    }
  }
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward) {
      node->backward(*node);
    }
  }
  for (auto* node : order) {
    if (!node->backward) {
      check_finite(node->grad, "backward pass");
    }
  }
}

Tensor Tensor::detach() const {
  const auto& n = require(node_);
  return from_node(make_leaf(n.shape, n.data, false));
}

Tensor Tensor::clone() const {
  const auto& n = require(node_);
  return from_node(make_leaf(n.shape, n.data, n.requires_grad));
}

bool Tensor::bit_equal(const Tensor& other) const {
  const auto& a = require(node_);
  const auto& b = require(other.node_);
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace delnet
