#include "hcinr/tensor.hpp"

#include "vector_math.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hcinr {

namespace {

using Buffer = std::vector<double>;
using BufferPtr = std::shared_ptr<const Buffer>;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

std::atomic<std::uint64_t> next_tape_id{1};
thread_local Tape* active_tape = nullptr;

[[noreturn]] void shape_fail(OpKind kind, const Shape& a, const Shape& b, const char* what) {
  std::ostringstream os;
  os << op_name(kind) << ": " << what << " (" << shape_string(a) << " vs " << shape_string(b)
     << ")";
  throw ShapeError(os.str());
}

[[noreturn]] void shape_fail(OpKind kind, const Shape& a, const char* what) {
  std::ostringstream os;
  os << op_name(kind) << ": " << what << " (" << shape_string(a) << ")";
  throw ShapeError(os.str());
}

void require_matrix(OpKind kind, const Shape& s) {
  if (s.size() != 2) shape_fail(kind, s, "expected a rank-2 tensor");
}

}  // namespace

// Internal access for building tensors that share buffers.
struct TensorAccess {
  static Tensor make(Shape shape, BufferPtr data) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }
  static const BufferPtr& data(const Tensor& t) { return t.data_; }
  static std::uint64_t tape_id(const Tensor& t) { return t.tape_id_; }
  static std::size_t node(const Tensor& t) { return t.node_; }
  static void bind(Tensor& t, std::uint64_t tape, std::size_t node) {
    t.tape_id_ = tape;
    t.node_ = node;
  }
};

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSubtract: return "subtract";
    case OpKind::kMultiply: return "multiply";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kSin: return "sin";
    case OpKind::kCos: return "cos";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSquare: return "square";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kAffine: return "affine";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSegment: return "segment";
    case OpKind::kLinear: return "linear";
    case OpKind::kModulate: return "modulate";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : shape_{0}, data_(std::make_shared<const Buffer>()) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != values.size()) {
    std::ostringstream os;
    os << "tensor: shape " << shape_string(shape_) << " holds " << shape_numel(shape_)
       << " values, got " << values.size();
    throw ShapeError(os.str());
  }
  data_ = std::make_shared<const Buffer>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), Buffer(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor " + shape_string(shape_) + " is not a matrix");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor " + shape_string(shape_) + " is not a matrix");
  return shape_[1];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return (*data_)[row * cols() + col];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor " + shape_string(shape_) + " is not a scalar");
  return (*data_)[0];
}

std::optional<std::size_t> Tensor::node() const {
  if (node_ == kNoNode) return std::nullopt;
  return node_;
}

Tensor Tensor::detach() const { return TensorAccess::make(shape_, data_); }

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : id_(next_tape_id.fetch_add(1)), previous_(active_tape) {
  detail::tune_allocator();
  active_tape = this;
}

Tape::~Tape() { active_tape = previous_; }

Tape* Tape::active() { return active_tape; }

Tensor Tape::watch(const Tensor& t) {
  Node node{OpKind::kLeaf, {}, t.shape(), TensorAccess::data(t), nullptr, {}};
  nodes_.push_back(std::move(node));
  Tensor out = t.detach();
  TensorAccess::bind(out, id_, nodes_.size() - 1);
  return out;
}

Tensor Tape::record(OpKind kind, std::span<const Tensor> inputs, Tensor result,
                    const OpAttributes& attrs, BufferPtr aux) {
  Node node;
  node.kind = kind;
  node.inputs.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    node.inputs.push_back(
        Operand{TensorAccess::node(in), in.shape(), TensorAccess::data(in)});
  }
  node.shape = result.shape();
  node.value = TensorAccess::data(result);
  node.aux = std::move(aux);
  node.attrs = attrs;
  nodes_.push_back(std::move(node));
  TensorAccess::bind(result, id_, nodes_.size() - 1);
  return result;
}


Gradients Tape::backward(const Tensor& output) const {
  if (output.numel() != 1) {
    throw AutodiffError("backward: output must be scalar, got shape " +
                        shape_string(output.shape()));
  }
  if (!output.on_tape() || TensorAccess::tape_id(output) != id_) {
    throw AutodiffError("backward: output is detached from this tape");
  }
  const std::size_t root = TensorAccess::node(output);

  Gradients g;
  g.tape_id_ = id_;
  g.shapes_.resize(nodes_.size());
  g.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i <= root; ++i) g.shapes_[i] = nodes_[i].shape;
  g.grads_[root].assign(1, 1.0);

  using detail::GradBuffer;
  // Sizes the gradient of `id` on its first contribution; the contents are
  // then uninitialized and `fresh` is set so full-coverage ops can assign.
  auto slot = [&](std::size_t id, bool& fresh) -> GradBuffer& {
    GradBuffer& b = g.grads_[id];
    fresh = b.empty();
    if (fresh) b.resize(shape_numel(nodes_[id].shape));
    return b;
  };
  auto grad_for = [&](std::size_t id) -> GradBuffer& {
    bool fresh = false;
    GradBuffer& b = slot(id, fresh);
    if (fresh) std::fill(b.begin(), b.end(), 0.0);
    return b;
  };
  // d[i] (+)= f(i) over the whole buffer of `id`.
  auto emit = [&](std::size_t id, auto&& f) {
    bool fresh = false;
    GradBuffer& d = slot(id, fresh);
    const std::size_t m = d.size();
    if (fresh) {
      for (std::size_t i = 0; i < m; ++i) d[i] = f(i);
    } else {
      for (std::size_t i = 0; i < m; ++i) d[i] += f(i);
    }
  };

  for (std::size_t idx = root + 1; idx-- > 0;) {
    if (g.grads_[idx].empty()) continue;
    const Node& node = nodes_[idx];
    const GradBuffer& up = g.grads_[idx];
    const std::size_t n = up.size();
    auto wants = [&](std::size_t k) { return node.inputs[k].node != Tensor::kNoNode; };
    auto in_value = [&](std::size_t k) -> const Buffer& { return *node.inputs[k].value; };
    auto pass = [&](std::size_t i) { return up[i]; };

    switch (node.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kAdd:
        for (std::size_t k = 0; k < 2; ++k)
          if (wants(k)) emit(node.inputs[k].node, pass);
        break;
      case OpKind::kSubtract:
        if (wants(0)) emit(node.inputs[0].node, pass);
        if (wants(1)) emit(node.inputs[1].node, [&](std::size_t i) { return -up[i]; });
        break;
      case OpKind::kMultiply:
        for (std::size_t k = 0; k < 2; ++k) {
          if (!wants(k)) continue;
          const Buffer& other = in_value(1 - k);
          emit(node.inputs[k].node, [&](std::size_t i) { return up[i] * other[i]; });
        }
        break;
      case OpKind::kMatMul: {
        const Shape& sa = node.inputs[0].shape;
        const Shape& sb = node.inputs[1].shape;
        ConstMap dc(up.data(), sa[0], sb[1]);
        bool fresh = false;
        if (wants(0)) {
          MutMap da(slot(node.inputs[0].node, fresh).data(), sa[0], sa[1]);
          ConstMap b(in_value(1).data(), sb[0], sb[1]);
          if (fresh) {
            da.noalias() = dc * b.transpose();
          } else {
            da.noalias() += dc * b.transpose();
          }
        }
        if (wants(1)) {
          MutMap db(slot(node.inputs[1].node, fresh).data(), sb[0], sb[1]);
          ConstMap a(in_value(0).data(), sa[0], sa[1]);
          if (fresh) {
            db.noalias() = a.transpose() * dc;
          } else {
            db.noalias() += a.transpose() * dc;
          }
        }
        break;
      }
      case OpKind::kLinear: {
        const Shape& sa = node.inputs[0].shape;
        const Shape& sb = node.inputs[1].shape;
        ConstMap dc(up.data(), sa[0], sb[1]);
        bool fresh = false;
        if (wants(0)) {
          MutMap da(slot(node.inputs[0].node, fresh).data(), sa[0], sa[1]);
          ConstMap b(in_value(1).data(), sb[0], sb[1]);
          if (fresh) {
            da.noalias() = dc * b.transpose();
          } else {
            da.noalias() += dc * b.transpose();
          }
        }
        if (wants(1)) {
          MutMap db(slot(node.inputs[1].node, fresh).data(), sb[0], sb[1]);
          ConstMap a(in_value(0).data(), sa[0], sa[1]);
          if (fresh) {
            db.noalias() = a.transpose() * dc;
          } else {
            db.noalias() += a.transpose() * dc;
          }
        }
        if (wants(2)) {
          // Plain row loop: Eigen's reduction order depends on buffer alignment.
          GradBuffer& d = grad_for(node.inputs[2].node);
          const std::size_t cols = sb[1];
          for (std::size_t r = 0; r < sa[0]; ++r)
            for (std::size_t c = 0; c < cols; ++c) d[c] += up[r * cols + c];
        }
        break;
      }
      case OpKind::kModulate: {
        if (wants(0)) {
          const Buffer& gain = in_value(1);
          emit(node.inputs[0].node, [&](std::size_t i) { return up[i] * gain[i]; });
        }
        if (wants(1)) {
          const Buffer& x = in_value(0);
          emit(node.inputs[1].node, [&](std::size_t i) { return up[i] * x[i]; });
        }
        if (wants(2)) emit(node.inputs[2].node, pass);
        break;
      }
      case OpKind::kSin:
      case OpKind::kCos: {
        if (!wants(0)) break;
        const Buffer& deriv = *node.aux;
        emit(node.inputs[0].node, [&](std::size_t i) { return up[i] * deriv[i]; });
        break;
      }
      case OpKind::kTanh: {
        if (!wants(0)) break;
        const Buffer& y = *node.value;
        emit(node.inputs[0].node, [&](std::size_t i) { return up[i] * (1.0 - y[i] * y[i]); });
        break;
      }
      case OpKind::kRelu: {
        if (!wants(0)) break;
        const Buffer& x = in_value(0);
        emit(node.inputs[0].node, [&](std::size_t i) { return x[i] > 0.0 ? up[i] : 0.0; });
        break;
      }
      case OpKind::kSqrt: {
        if (!wants(0)) break;
        const Buffer& y = *node.value;
        emit(node.inputs[0].node, [&](std::size_t i) { return up[i] * 0.5 / y[i]; });
        break;
      }
      case OpKind::kSquare: {
        if (!wants(0)) break;
        const Buffer& x = in_value(0);
        emit(node.inputs[0].node, [&](std::size_t i) { return 2.0 * x[i] * up[i]; });
        break;
      }
      case OpKind::kSum:
      case OpKind::kMean: {
        if (!wants(0)) break;
        double u = up[0];
        if (node.kind == OpKind::kMean) u /= static_cast<double>(shape_numel(node.inputs[0].shape));
        emit(node.inputs[0].node, [u](std::size_t) { return u; });
        break;
      }
      case OpKind::kAddBias: {
        if (wants(0)) emit(node.inputs[0].node, pass);
        if (wants(1)) {
          GradBuffer& d = grad_for(node.inputs[1].node);
          const std::size_t cols = d.size();
          const std::size_t rows = n / cols;
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) d[c] += up[r * cols + c];
        }
        break;
      }
      case OpKind::kAffine: {
        if (!wants(0)) break;
        const double s = node.attrs.scale;
        emit(node.inputs[0].node, [&](std::size_t i) { return s * up[i]; });
        break;
      }
      case OpKind::kSliceCols: {
        if (!wants(0)) break;
        GradBuffer& d = grad_for(node.inputs[0].node);
        const std::size_t rows = node.shape[0];
        const std::size_t count = node.shape[1];
        const std::size_t in_cols = node.inputs[0].shape[1];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < count; ++c)
            d[r * in_cols + node.attrs.begin + c] += up[r * count + c];
        break;
      }
      case OpKind::kConcatCols: {
        const std::size_t rows = node.shape[0];
        const std::size_t out_cols = node.shape[1];
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const std::size_t cols = node.inputs[k].shape[1];
          if (wants(k)) {
            GradBuffer& d = grad_for(node.inputs[k].node);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < cols; ++c)
                d[r * cols + c] += up[r * out_cols + offset + c];
          }
          offset += cols;
        }
        break;
      }
      case OpKind::kSegment: {
        if (!wants(0)) break;
        GradBuffer& d = grad_for(node.inputs[0].node);
        for (std::size_t i = 0; i < n; ++i) d[node.attrs.begin + i] += up[i];
        break;
      }
    }
  }
  return g;
}

Tensor Gradients::of(const Tensor& t) const {
  if (!t.on_tape() || TensorAccess::tape_id(t) != tape_id_) {
    throw AutodiffError("gradient requested for a tensor that is not on the differentiated tape");
  }
  const std::size_t id = TensorAccess::node(t);
  if (id >= grads_.size() || grads_[id].empty()) return Tensor::zeros(t.shape());
  const auto& b = grads_[id];
  return Tensor(t.shape(), std::vector<double>(b.begin(), b.end()));
}

bool Gradients::reached(const Tensor& t) const {
  if (!t.on_tape() || TensorAccess::tape_id(t) != tape_id_) return false;
  const std::size_t id = TensorAccess::node(t);
  return id < grads_.size() && !grads_[id].empty();
}

// ---------------------------------------------------------------------------
// Forward kernels

namespace {

void check_same(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(kind, a.shape(), b.shape(), "shape mismatch");
}

template <typename F>
Tensor map_unary(const Tensor& x, F&& f) {
  const auto in = x.values();
  Buffer out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return Tensor(x.shape(), std::move(out));
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F&& f) {
  const auto x = a.values();
  const auto y = b.values();
  Buffer out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return Tensor(a.shape(), std::move(out));
}

// Tape to record on, or nullptr when every input is constant.
Tape* recording_tape(OpKind kind, std::span<const Tensor> inputs) {
  bool any = false;
  for (const Tensor& t : inputs) {
    if (!t.on_tape()) continue;
    if (active_tape == nullptr || TensorAccess::tape_id(t) != active_tape->id()) {
      throw AutodiffError(std::string(op_name(kind)) +
                          ": input refers to a tape that is not active on this thread");
    }
    any = true;
  }
  return any ? active_tape : nullptr;
}

void require_arity(OpKind kind, std::span<const Tensor> inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                     " inputs, got " + std::to_string(inputs.size()));
  }
}

}  // namespace

Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttributes& attrs) {
  Tape* tape = recording_tape(kind, inputs);
  BufferPtr aux;
  Tensor result;

  switch (kind) {
    case OpKind::kLeaf:
      throw AutodiffError("leaf: use Tape::watch to register leaves");
    case OpKind::kAdd:
    case OpKind::kSubtract:
    case OpKind::kMultiply: {
      require_arity(kind, inputs, 2);
      check_same(kind, inputs[0], inputs[1]);
      if (kind == OpKind::kAdd)
        result = map_binary(inputs[0], inputs[1], [](double a, double b) { return a + b; });
      else if (kind == OpKind::kSubtract)
        result = map_binary(inputs[0], inputs[1], [](double a, double b) { return a - b; });
      else
        result = map_binary(inputs[0], inputs[1], [](double a, double b) { return a * b; });
      break;
    }
    case OpKind::kMatMul: {
      require_arity(kind, inputs, 2);
      const Shape& sa = inputs[0].shape();
      const Shape& sb = inputs[1].shape();
      if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        shape_fail(kind, sa, sb, "inner dimensions do not conform");
      Buffer out(sa[0] * sb[1]);
      MutMap c(out.data(), sa[0], sb[1]);
      c.noalias() = ConstMap(inputs[0].values().data(), sa[0], sa[1]) *
                    ConstMap(inputs[1].values().data(), sb[0], sb[1]);
      result = Tensor({sa[0], sb[1]}, std::move(out));
      break;
    }
    case OpKind::kLinear: {
      require_arity(kind, inputs, 3);
      const Shape& sa = inputs[0].shape();
      const Shape& sb = inputs[1].shape();
      const Shape& sc = inputs[2].shape();
      if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        shape_fail(kind, sa, sb, "inner dimensions do not conform");
      if (sc.size() != 1 || sc[0] != sb[1])
        shape_fail(kind, sb, sc, "bias must be a vector matching the column count");
      Buffer out(sa[0] * sb[1]);
      MutMap c(out.data(), sa[0], sb[1]);
      c.rowwise() = Eigen::Map<const Eigen::RowVectorXd>(inputs[2].values().data(), sb[1]);
      c.noalias() += ConstMap(inputs[0].values().data(), sa[0], sa[1]) *
                     ConstMap(inputs[1].values().data(), sb[0], sb[1]);
      result = Tensor({sa[0], sb[1]}, std::move(out));
      break;
    }
    case OpKind::kModulate: {
      require_arity(kind, inputs, 3);
      check_same(kind, inputs[0], inputs[1]);
      check_same(kind, inputs[0], inputs[2]);
      const auto x = inputs[0].values();
      const auto g = inputs[1].values();
      const auto b = inputs[2].values();
      Buffer out(x.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = g[i] * x[i] + b[i];
      result = Tensor(inputs[0].shape(), std::move(out));
      break;
    }
    case OpKind::kSin:
    case OpKind::kCos: {
      require_arity(kind, inputs, 1);
      const auto x = inputs[0].values();
      Buffer out(x.size());
      const bool is_sin = kind == OpKind::kSin;
      const double w = attrs.scale;
      if (tape) {
        // aux holds the derivative w.r.t. x, including the frequency factor.
        Buffer other(x.size());
        if (is_sin) {
          detail::vsincos(x.data(), w, out.data(), other.data(), x.size());
          if (w != 1.0)
            for (double& v : other) v *= w;
        } else {
          detail::vsincos(x.data(), w, other.data(), out.data(), x.size());
          for (double& v : other) v *= -w;
        }
        aux = std::make_shared<const Buffer>(std::move(other));
      } else if (is_sin) {
        detail::vsin(x.data(), w, out.data(), x.size());
      } else {
        detail::vcos(x.data(), w, out.data(), x.size());
      }
      result = Tensor(inputs[0].shape(), std::move(out));
      break;
    }
    case OpKind::kTanh:
      require_arity(kind, inputs, 1);
    {
      const auto x = inputs[0].values();
      Buffer out(x.size());
      detail::vtanh(x.data(), out.data(), x.size());
      result = Tensor(inputs[0].shape(), std::move(out));
      break;
    }
    case OpKind::kRelu:
      require_arity(kind, inputs, 1);
      result = map_unary(inputs[0], [](double v) { return v > 0.0 ? v : 0.0; });
      break;
    case OpKind::kSqrt:
      require_arity(kind, inputs, 1);
      result = map_unary(inputs[0], [](double v) { return std::sqrt(v); });
      break;
    case OpKind::kSquare:
      require_arity(kind, inputs, 1);
      result = map_unary(inputs[0], [](double v) { return v * v; });
      break;
    case OpKind::kSum:
    case OpKind::kMean: {
      require_arity(kind, inputs, 1);
      const auto x = inputs[0].values();
      double acc = 0.0;
      for (double v : x) acc += v;
      if (kind == OpKind::kMean) {
        if (x.empty()) shape_fail(kind, inputs[0].shape(), "mean of an empty tensor");
        acc /= static_cast<double>(x.size());
      }
      result = Tensor::scalar(acc);
      break;
    }
    case OpKind::kAddBias: {
      require_arity(kind, inputs, 2);
      const Shape& sx = inputs[0].shape();
      const Shape& sb = inputs[1].shape();
      if (sx.size() != 2 || sb.size() != 1 || sb[0] != sx[1])
        shape_fail(kind, sx, sb, "bias must be a vector matching the column count");
      const auto x = inputs[0].values();
      const auto b = inputs[1].values();
      Buffer out(x.size());
      const std::size_t cols = sx[1];
      for (std::size_t r = 0; r < sx[0]; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + b[c];
      result = Tensor(sx, std::move(out));
      break;
    }
    case OpKind::kAffine: {
      require_arity(kind, inputs, 1);
      const double s = attrs.scale;
      const double t = attrs.shift;
      result = map_unary(inputs[0], [s, t](double v) { return s * v + t; });
      break;
    }
    case OpKind::kSliceCols: {
      require_arity(kind, inputs, 1);
      const Shape& sx = inputs[0].shape();
      require_matrix(kind, sx);
      if (attrs.begin + attrs.count > sx[1])
        shape_fail(kind, sx, Shape{attrs.begin, attrs.count}, "column range out of bounds");
      const auto x = inputs[0].values();
      Buffer out(sx[0] * attrs.count);
      for (std::size_t r = 0; r < sx[0]; ++r)
        std::copy_n(x.data() + r * sx[1] + attrs.begin, attrs.count,
                    out.data() + r * attrs.count);
      result = Tensor({sx[0], attrs.count}, std::move(out));
      break;
    }
    case OpKind::kConcatCols: {
      if (inputs.empty()) throw ShapeError("concat_cols: no inputs");
      require_matrix(kind, inputs[0].shape());
      const std::size_t rows = inputs[0].shape()[0];
      std::size_t total = 0;
      for (const Tensor& t : inputs) {
        require_matrix(kind, t.shape());
        if (t.shape()[0] != rows)
          shape_fail(kind, inputs[0].shape(), t.shape(), "row counts differ");
        total += t.shape()[1];
      }
      Buffer out(rows * total);
      std::size_t offset = 0;
      for (const Tensor& t : inputs) {
        const std::size_t cols = t.shape()[1];
        const auto x = t.values();
        for (std::size_t r = 0; r < rows; ++r)
          std::copy_n(x.data() + r * cols, cols, out.data() + r * total + offset);
        offset += cols;
      }
      result = Tensor({rows, total}, std::move(out));
      break;
    }
    case OpKind::kSegment: {
      require_arity(kind, inputs, 1);
      const std::size_t n = shape_numel(attrs.shape);
      if (attrs.begin + n > inputs[0].numel())
        shape_fail(kind, inputs[0].shape(), attrs.shape, "segment exceeds the source");
      const auto x = inputs[0].values();
      result = Tensor(attrs.shape, Buffer(x.begin() + static_cast<std::ptrdiff_t>(attrs.begin),
                                          x.begin() + static_cast<std::ptrdiff_t>(attrs.begin + n)));
      break;
    }
  }

  if (tape) return tape->record(kind, inputs, std::move(result), attrs, std::move(aux));
  return result;
}

namespace ad {

namespace {
Tensor unary(OpKind k, const Tensor& x, const OpAttributes& attrs = {}) {
  const Tensor in[] = {x};
  return apply(k, in, attrs);
}
Tensor binary(OpKind k, const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(k, in);
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(OpKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(OpKind::kSubtract, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(OpKind::kMultiply, a, b); }
Tensor matmul(const Tensor& a, const Tensor& b) { return binary(OpKind::kMatMul, a, b); }
Tensor add_bias(const Tensor& x, const Tensor& bias) { return binary(OpKind::kAddBias, x, bias); }
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Tensor in[] = {x, weight, bias};
  return apply(OpKind::kLinear, in);
}
Tensor sin(const Tensor& x, double frequency) {
  OpAttributes a;
  a.scale = frequency;
  return unary(OpKind::kSin, x, a);
}
Tensor cos(const Tensor& x, double frequency) {
  OpAttributes a;
  a.scale = frequency;
  return unary(OpKind::kCos, x, a);
}
Tensor modulate(const Tensor& x, const Tensor& gain, const Tensor& shift) {
  const Tensor in[] = {x, gain, shift};
  return apply(OpKind::kModulate, in);
}
Tensor tanh(const Tensor& x) { return unary(OpKind::kTanh, x); }
Tensor relu(const Tensor& x) { return unary(OpKind::kRelu, x); }
Tensor sqrt(const Tensor& x) { return unary(OpKind::kSqrt, x); }
Tensor square(const Tensor& x) { return unary(OpKind::kSquare, x); }
Tensor sum(const Tensor& x) { return unary(OpKind::kSum, x); }
Tensor mean(const Tensor& x) { return unary(OpKind::kMean, x); }

Tensor affine(const Tensor& x, double scale, double shift) {
  OpAttributes a;
  a.scale = scale;
  a.shift = shift;
  return unary(OpKind::kAffine, x, a);
}

Tensor scale(const Tensor& x, double factor) { return affine(x, factor, 0.0); }

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  OpAttributes a;
  a.begin = begin;
  a.count = count;
  return unary(OpKind::kSliceCols, x, a);
}

Tensor concat_cols(std::span<const Tensor> parts) { return apply(OpKind::kConcatCols, parts); }

Tensor segment(const Tensor& x, std::size_t begin, Shape shape) {
  OpAttributes a;
  a.begin = begin;
  a.shape = std::move(shape);
  return unary(OpKind::kSegment, x, a);
}

Tensor mse(const Tensor& pred, const Tensor& target) { return mean(square(sub(pred, target))); }

}  // namespace ad

// ---------------------------------------------------------------------------

double finite_diff_check(const ScalarFunction& f, const Tensor& point, double step,
                         std::span<const std::size_t> coordinates) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");

  std::vector<double> analytic;
  {
    Tape tape;
    const Tensor x = tape.watch(point);
    const Tensor y = f(x);
    if (!std::isfinite(y.item())) throw NonFiniteError("finite_diff_check: non-finite value at point");
    analytic = tape.backward(y).of(x).to_vector();
  }

  std::vector<std::size_t> coords(coordinates.begin(), coordinates.end());
  if (coords.empty()) {
    coords.resize(point.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
  }

  auto evaluate = [&](std::size_t i, double delta) {
    std::vector<double> v = point.to_vector();
    v[i] += delta;
    const double y = f(Tensor(point.shape(), std::move(v))).item();
    if (!std::isfinite(y)) throw NonFiniteError("finite_diff_check: non-finite value at perturbed point");
    return y;
  };

  double worst = 0.0;
  for (std::size_t i : coords) {
    if (i >= point.numel()) throw std::out_of_range("finite_diff_check: coordinate out of range");
    const double fd = (evaluate(i, step) - evaluate(i, -step)) / (2.0 * step);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace hcinr
