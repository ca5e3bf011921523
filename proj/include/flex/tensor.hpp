#pragma once

// Dense row-major tensors and a reverse-mode tape over the fixed set of
// primitives the logical operators need.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flex {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(Shape s);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor row(std::vector<double> values);
  static Tensor scalar(double v) { return Tensor({1, 1}, v); }

  Shape shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_.cols + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * shape_.cols, shape_.cols);
  }
  std::span<double> row_span(std::size_t r) {
    return std::span<double>(data_).subspan(r * shape_.cols, shape_.cols);
  }
  const std::vector<double>& values() const { return data_; }

  void fill(double v);
  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// A trainable table or weight matrix. Gradients accumulate across backward
// passes until zero_grad(); Adam moments live alongside the value.
struct Param {
  Param() = default;
  Param(std::string name, Shape shape)
      : name(std::move(name)),
        value(shape),
        grad(shape),
        adam_m(shape),
        adam_v(shape) {}

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;

  void zero_grad() { grad.fill(0.0); }
};

enum class OpKind : std::uint8_t {
  kConstant,
  kParam,
  kParamRow,
  kAdd,
  kSub,
  kMul,
  kMatmul,
  kConcat,
  kSlice,
  kStack,
  kTanh,
  kSigmoid,
  kRelu,
  kExp,
  kLog,
  kLogSigmoid,
  kSoftmaxGroup,
  kMin,
  kMax,
  kSum,
  kSumRows,
  kAbs,
  kScale,
  kClamp,
};

std::string_view op_name(OpKind kind);

// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

// Records primitive operations in execution order. Backward walks the record
// in exact reverse order, so topological order holds by construction.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value);
  Var param(Param& p);
  // Gathers one row of a table as a 1 x cols vector; backward scatters into
  // that row only.
  Var param_row(Param& p, std::size_t row);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var matmul(Var a, Var b);
  // Concatenate row vectors (all 1 x n) along columns.
  Var concat(std::span<const Var> parts);
  // Columns [begin, begin + len) of a row vector.
  Var slice(Var a, std::size_t begin, std::size_t len);
  // Stack k row vectors of equal width into a k x n matrix.
  Var stack(std::span<const Var> rows);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var exp(Var a);
  // Natural log with the argument clamped at 1e-12.
  Var log(Var a);
  Var log_sigmoid(Var a);
  // Softmax over the rows of a k x n matrix, independently per column.
  Var softmax_group(Var a);
  Var min(Var a, Var b);
  Var max(Var a, Var b);
  Var sum(Var a);
  Var sum_rows(Var a);
  Var abs(Var a);
  Var scale(Var a, double s);
  // Elementwise clamp to [lo, hi]; gradient passes only where lo <= x <= hi.
  Var clamp(Var a, double lo, double hi);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const;
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const { return nodes_.size(); }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }

  // Populates node gradients and accumulates into every reachable Param.
  void backward(Var loss);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    Tensor grad;
    Param* param = nullptr;
    std::size_t row = 0;   // kParamRow source row, kSlice begin
    double scalar = 0.0;   // kScale factor, kClamp lower bound
    double upper = 0.0;    // kClamp upper bound
  };

  Var push(Node node);
  const Node& node(Var v) const { return nodes_.at(v.id); }
  void require_same_shape(OpKind op, Var a, Var b) const;
  void require_row(OpKind op, Var a) const;
  template <typename F>
  Var unary(OpKind op, Var a, F f);

  std::vector<Node> nodes_;
};

// Scalar objective built on a fresh tape; must be deterministic.
using ScalarFn = std::function<Var(Tape&)>;

// Largest |analytic - central difference| / max(1, |central difference|)
// over every entry of every listed Param.
double grad_check(const ScalarFn& f, std::span<Param* const> params,
                  double h = 1e-5);

}  // namespace flex
