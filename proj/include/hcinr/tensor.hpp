#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tape records every op whose inputs carry a node id on that tape. Tensors
// without a node id are constants. The tape is confined to the thread that
// created it; constructing a Tape makes it the active tape of the thread and
// destroying it restores the previous one.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hcinr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OpKind {
  kLeaf,
  kAdd,
  kSubtract,
  kMultiply,
  kMatMul,
  kSin,
  kCos,
  kTanh,
  kRelu,
  kSqrt,
  kSquare,
  kSum,
  kMean,
  kAddBias,
  kAffine,      // scale * x + shift, both scalars
  kSliceCols,   // columns [begin, begin + count) of a matrix
  kConcatCols,
  kSegment,     // contiguous flat range reshaped
  kLinear,      // x w + b
  kModulate,    // gain * x + shift, elementwise
};

const char* op_name(OpKind kind);

class Tape;

struct OpAttributes {
  double scale = 1.0;
  double shift = 0.0;
  std::size_t begin = 0;
  std::size_t count = 0;
  Shape shape;
};

class Tensor;

// Generic entry point; shape rules per kind:
//   add/subtract/multiply: identical shapes.
//   matmul: [m,k] x [k,n] -> [m,n].
//   add_bias: [m,n] + [n] -> [m,n].
//   linear: [m,k] x [k,n] + [n] -> [m,n].
//   modulate: three identical shapes.
//   sin/cos/tanh/relu/sqrt/square/affine: elementwise, any shape; sin and
//   cos evaluate at attrs.scale * x.
//   sum/mean: any shape -> scalar.
//   slice_cols: [m,n] -> [m,count]; concat_cols: [m,n_i]... -> [m, sum n_i].
//   segment: any -> attrs.shape, taking numel(attrs.shape) values from attrs.begin.
Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttributes& attrs = {});

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_->size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;
  std::vector<double> to_vector() const { return *data_; }

  std::optional<std::size_t> node() const;
  bool on_tape() const { return node_ != kNoNode; }
  Tensor detach() const;

 private:
  friend class Tape;
  friend struct TensorAccess;

  static constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::uint64_t tape_id_ = 0;
  std::size_t node_ = kNoNode;
};

namespace detail {

// Allocator whose value-initialization leaves doubles uninitialized, so a
// gradient buffer can be sized and then written without a zero fill.
template <typename T>
struct UninitAllocator : std::allocator<T> {
  using std::allocator<T>::allocator;
  template <typename U>
  struct rebind {
    using other = UninitAllocator<U>;
  };
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using GradBuffer = std::vector<double, UninitAllocator<double>>;

}  // namespace detail

// Gradients returned by Tape::backward, indexed by node.
class Gradients {
 public:
  // Gradient of the differentiated output w.r.t. `t`; zeros when `t` was not
  // reachable. Throws if `t` has no node on the originating tape.
  Tensor of(const Tensor& t) const;
  bool reached(const Tensor& t) const;

 private:
  friend class Tape;
  std::uint64_t tape_id_ = 0;
  std::vector<Shape> shapes_;
  std::vector<detail::GradBuffer> grads_;
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a copy of `t` as a differentiable leaf.
  Tensor watch(const Tensor& t);

  // Reverse pass from a scalar output on this tape.
  Gradients backward(const Tensor& output) const;

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

  static Tape* active();

  struct Operand {
    std::size_t node;  // kNoNode for constants
    Shape shape;
    std::shared_ptr<const std::vector<double>> value;
  };
  struct Node {
    OpKind kind;
    std::vector<Operand> inputs;
    Shape shape;
    std::shared_ptr<const std::vector<double>> value;
    // Local derivative saved during the forward pass (sin, cos).
    std::shared_ptr<const std::vector<double>> aux;
    OpAttributes attrs;
  };

 private:
  friend Tensor apply(OpKind, std::span<const Tensor>, const OpAttributes&);

  Tensor record(OpKind kind, std::span<const Tensor> inputs, Tensor result,
                const OpAttributes& attrs, std::shared_ptr<const std::vector<double>> aux);

  std::uint64_t id_;
  Tape* previous_;
  std::vector<Node> nodes_;
};

namespace ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor sin(const Tensor& x, double frequency = 1.0);
Tensor cos(const Tensor& x, double frequency = 1.0);
// gain * x + shift as a single node.
Tensor modulate(const Tensor& x, const Tensor& gain, const Tensor& shift);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor add_bias(const Tensor& x, const Tensor& bias);
// add_bias(matmul(x, weight), bias) as a single node.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor affine(const Tensor& x, double scale, double shift = 0.0);
Tensor scale(const Tensor& x, double factor);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor segment(const Tensor& x, std::size_t begin, Shape shape);

Tensor mse(const Tensor& pred, const Tensor& target);

}  // namespace ad

using ScalarFunction = std::function<Tensor(const Tensor&)>;

// Max over the checked coordinates of |analytic - central difference| /
// max(1, |analytic|). An empty coordinate list checks every coordinate.
double finite_diff_check(const ScalarFunction& f, const Tensor& point, double step,
                         std::span<const std::size_t> coordinates = {});

}  // namespace hcinr
