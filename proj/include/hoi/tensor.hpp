#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is an immutable value. Tensors created by ops whose inputs live on
// a Tape are recorded on that tape; Tape::backward walks the records in
// reverse and returns the gradient of every tracked tensor.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hoi {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_values(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  bool empty() const { return numel() == 0; }

  std::span<const double> data() const;
  std::vector<double> to_vector() const { return {data().begin(), data().end()}; }
  double item() const;
  double operator[](std::size_t flat) const { return (*data_)[flat]; }
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return tape_ != nullptr; }
  std::optional<std::int32_t> node_id() const;
  Tape* tape() const { return tape_; }

  /// Same values, no tape attachment.
  Tensor detach() const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::int32_t node_ = -1;
};

/// A persistent trainable array. Watching it on a tape yields a tracked
/// tensor; backward() adds that tensor's gradient into `grad`.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;

  Parameter(std::string n, Shape s, std::vector<double> d);
  Tensor value() const { return Tensor(shape, data); }
  void zero_grad();
};

/// Result of Tape::backward.
class Gradients {
 public:
  /// Gradient of the loss w.r.t. a tensor recorded on the originating tape.
  /// Tensors that did not influence the loss get zeros.
  Tensor of(const Tensor& t) const;

 private:
  friend class Tape;
  std::vector<Shape> shapes_;
  std::vector<std::vector<double>> grads_;
  const Tape* tape_ = nullptr;
};

class Tape {
 public:
  using NodeId = std::int32_t;
  /// Receives the output gradient; pushes contributions into parents via grad().
  using BackwardFn = std::function<void(std::span<const double> out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf tensor that participates in differentiation.
  Tensor watch(const Tensor& value);
  /// Leaf tensor bound to a parameter; its gradient is accumulated into p.grad.
  Tensor watch(Parameter& p);

  /// Reverse pass from a scalar loss. Consumes the tape.
  Gradients backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // ---- used by op implementations
  Tensor record(Shape shape, std::vector<double> data, std::vector<NodeId> parents,
                BackwardFn fn);
  Tensor record(Shape shape, std::shared_ptr<const std::vector<double>> data,
                std::vector<NodeId> parents, BackwardFn fn);
  /// Gradient buffer of a node during the reverse pass.
  std::span<double> grad(NodeId id);
  std::span<const NodeId> parents(NodeId id) const { return nodes_.at(id).parents; }

 private:
  struct Node {
    Shape shape;
    std::vector<NodeId> parents;
    BackwardFn backward;
    Parameter* sink = nullptr;
  };
  Tensor make_leaf(const Tensor& value, Parameter* sink);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool consumed_ = false;
  friend class Gradients;
};

/// The common tape among inputs, or nullptr if none is tracked. Mixing tapes
/// is a contract error.
Tape* common_tape(std::initializer_list<const Tensor*> inputs);

}  // namespace hoi
