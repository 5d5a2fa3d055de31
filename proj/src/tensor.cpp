#include "hoi/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "hoi/errors.hpp"

namespace hoi {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ------------------------------------------------------------------ Tensor

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)),
      data_(std::make_shared<const std::vector<double>>(std::move(data))) {
  if (hoi::numel(shape_) != data_->size())
    throw DimensionError("tensor shape " + to_string(shape_) + " does not match " +
                         std::to_string(data_->size()) + " values");
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = hoi::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::from_values(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(v));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         to_string(shape_));
  return shape_[axis];
}

std::span<const double> Tensor::data() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
  return (*data_)[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw DimensionError("at(i, j) needs a matrix");
  return (*data_)[i * shape_[1] + j];
}

std::optional<std::int32_t> Tensor::node_id() const {
  if (!tape_) return std::nullopt;
  return node_;
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

// --------------------------------------------------------------- Parameter

Parameter::Parameter(std::string n, Shape s, std::vector<double> d)
    : name(std::move(n)), shape(std::move(s)), data(std::move(d)), grad(data.size(), 0.0) {
  if (hoi::numel(shape) != data.size())
    throw DimensionError("parameter " + name + " shape mismatch");
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

// --------------------------------------------------------------- Gradients

Tensor Gradients::of(const Tensor& t) const {
  if (t.tape() == nullptr || t.tape() != tape_)
    throw ContractError("gradient requested for a tensor not recorded on this tape");
  const auto id = static_cast<std::size_t>(*t.node_id());
  if (grads_[id].empty()) return Tensor::zeros(shapes_[id]);
  return Tensor(shapes_[id], grads_[id]);
}

// -------------------------------------------------------------------- Tape

Tensor Tape::make_leaf(const Tensor& value, Parameter* sink) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  Tensor t = value.detach();
  t.tape_ = this;
  t.node_ = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{value.shape(), {}, {}, sink});
  grads_.emplace_back();
  return t;
}

Tensor Tape::watch(const Tensor& value) { return make_leaf(value, nullptr); }

Tensor Tape::watch(Parameter& p) { return make_leaf(p.value(), &p); }

Tensor Tape::record(Shape shape, std::vector<double> data, std::vector<NodeId> parents,
                    BackwardFn fn) {
  return record(std::move(shape), std::make_shared<const std::vector<double>>(std::move(data)),
                std::move(parents), std::move(fn));
}

Tensor Tape::record(Shape shape, std::shared_ptr<const std::vector<double>> data,
                    std::vector<NodeId> parents, BackwardFn fn) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  if (numel(shape) != data->size()) throw DimensionError("recorded data does not fit shape");
  const auto id = static_cast<NodeId>(nodes_.size());
  for (auto p : parents)
    if (p < 0 || p >= id) throw ContractError("tape parents must precede their child");
  Tensor t;
  t.shape_ = shape;
  t.data_ = std::move(data);
  t.tape_ = this;
  t.node_ = id;
  nodes_.push_back(Node{std::move(shape), std::move(parents), std::move(fn), nullptr});
  grads_.emplace_back();
  return t;
}

std::span<double> Tape::grad(NodeId id) {
  auto& g = grads_.at(static_cast<std::size_t>(id));
  if (g.empty()) g.assign(numel(nodes_[static_cast<std::size_t>(id)].shape), 0.0);
  return g;
}

Gradients Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward() called twice on one tape");
  if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got shape " +
                                             to_string(loss.shape()));
  Gradients out;
  out.tape_ = this;
  consumed_ = true;
  if (loss.tape() == this) {
    grad(*loss.node_id())[0] = 1.0;
    for (auto id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
      auto& node = nodes_[static_cast<std::size_t>(id)];
      const auto& g = grads_[static_cast<std::size_t>(id)];
      if (g.empty()) continue;
      if (node.backward) node.backward(g, *this);
      if (node.sink) {
        for (std::size_t i = 0; i < g.size(); ++i) node.sink->grad[i] += g[i];
      }
    }
  } else if (loss.tape() != nullptr) {
    throw ContractError("loss recorded on a different tape");
  }
  for (const auto& n : nodes_) out.shapes_.push_back(n.shape);
  out.grads_ = std::move(grads_);
  // Closures hold references to intermediate values; release them.
  nodes_.clear();
  grads_.clear();
  return out;
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->tape()) continue;
    if (tape && tape != t->tape()) throw ContractError("operands live on different tapes");
    tape = t->tape();
  }
  return tape;
}

}  // namespace hoi
