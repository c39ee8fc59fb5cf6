#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace delnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One vertex of the dynamic gradient tape. Leaves have no backward function.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;
  const char* op = "leaf";
};

}  // namespace detail

/// Dense row-major float64 array that participates in reverse-mode
/// differentiation.
///
/// A Tensor is a handle: copies alias the same storage and tape node. Use
/// clone() for an independent copy and detach() to cut the tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  /// Direct write access. Only valid on leaves; mutating an interior node
  /// would silently invalidate its backward function.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Runs reverse-mode differentiation from this scalar, seeding d/dself = 1.
  /// Interior gradients are recomputed from zero on every call; leaf
  /// gradients accumulate until zero_grad().
  void backward() const;

  /// New leaf sharing no storage with this tensor and carrying no gradient.
  Tensor detach() const;
  /// Deep copy as a leaf with the same requires_grad flag.
  Tensor clone() const;

  /// Bitwise equality of shape and data.
  bool bit_equal(const Tensor& other) const;

  // Internal: construction of interior nodes by ops.
  static Tensor from_node(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

void check_finite(std::span<const double> values, const char* where);

}  // namespace delnet
