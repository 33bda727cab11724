#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bdrlab {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. A tensor that requires grad gets a grad
// buffer of identical shape once a backward pass reaches it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::span<const double> values);  // shape [n]
  static Tensor column(std::span<const double> values);  // shape [n x 1]
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  // Matrix view: rank-1 tensors are treated as a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  // Value of a single-element tensor.
  double item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  Tensor& set_requires_grad(bool on) noexcept {
    requires_grad_ = on;
    return *this;
  }

  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<const double> grad() const;
  void accumulate_grad(std::span<const double> delta);
  void zero_grad() { grad_.reset(); }

  Tensor row_slice(std::size_t begin, std::size_t end) const;
  Tensor select_rows(std::span<const std::size_t> rows) const;

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  double item() const { return value().item(); }
  const Shape& shape() const { return value().shape(); }
};

// Ordered record of primitive operations. Inputs always precede the node that
// consumes them, so reverse index order is a valid reverse topological order.
// One tape per thread; tapes are neither copied nor moved because recorded
// adjoint closures refer back to it.
class Tape {
 public:
  using Adjoints = std::vector<std::vector<double>>;
  using BackwardFn = std::function<void(std::span<const double> out_adj, Adjoints& adj)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient is collected if value.requires_grad() is set.
  Var leaf(Tensor value);
  Var variable(Tensor value) { return leaf(std::move(value.set_requires_grad(true))); }
  Var constant(Tensor value) { return leaf(std::move(value.set_requires_grad(false))); }

  const Tensor& value(Var v) const { return nodes_.at(v.index).value; }
  Tensor& tensor(Var v) { return nodes_.at(v.index).value; }
  std::span<const double> grad(Var v) const { return nodes_.at(v.index).value.grad(); }
  bool needs_grad(std::size_t index) const { return nodes_[index].needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse pass from a scalar. Leaf grads accumulate across calls.
  void backward(Var loss);

  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    bool is_leaf = false;
  };
  std::vector<Node> nodes_;
};

// --- primitive operations -------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// a[m x n] + row[1 x n] broadcast over rows.
Var add_row(Var a, Var row);
Var relu(Var x);
Var sum(Var x);
Var mean(Var x);
// Columns [begin, end) of a matrix.
Var slice_cols(Var x, std::size_t begin, std::size_t end);

// Mean over the batch of -log softmax(logits + offsets)[label]. Offsets are
// constants; gradients flow to the logits only.
Var ce_with_offset(Var logits, std::span<const double> offsets, std::span<const std::size_t> labels);

// Same, with each sample's term multiplied by class_weights[label].
Var weighted_ce_with_offset(Var logits, std::span<const double> offsets, std::span<const double> class_weights,
                            std::span<const std::size_t> labels);

// Mean over rows of KL(softmax(teacher / T) || softmax(student / T)).
// The teacher is a constant.
Var softmax_kl(Var student_logits, const Tensor& teacher_logits, double temperature);

// Per-row softmax of (logits + offsets), no tape involvement.
Tensor softmax_rows(const Tensor& logits, std::span<const double> offsets = {});

using ScalarFn = std::function<Var(Var)>;

// Value and gradient of f at x, on a private tape.
std::pair<double, std::vector<double>> value_and_grad(const ScalarFn& f, const Tensor& x);

// Worst per-coordinate relative error between the backward-pass gradient and
// central differences, |a - b| / max(|a|, |b|, 1e-8).
double finite_diff_check(const ScalarFn& f, const Tensor& x, double step = 1e-5);

}  // namespace bdrlab
