#include "gradmod/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace gradmod {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::atomic<std::uint64_t> g_next_seq{1};

NodePtr new_node(Shape shape, std::vector<double> value) {
  if (numel(shape) != value.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not hold " + std::to_string(value.size()) +
                     " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

// Builds an op result. The backward closure and the input references are only
// retained when some input participates in differentiation.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto n = new_node(std::move(shape), std::move(value));
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any) {
    n->requires_grad = true;
    for (const auto& t : inputs) n->inputs.push_back(t.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward_fn) {
  auto n = new_node(std::move(shape), std::move(value));
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any) {
    n->requires_grad = true;
    for (const auto& t : inputs) n->inputs.push_back(t.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

// Gradient buffer of an input, or nullptr when that input is not differentiated.
double* grad_sink(Node& n) {
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

const Node& require(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
  return *t.node();
}

enum class Bcast { None, Left, Right };

Bcast check_binary(const Tensor& a, const Tensor& b, const char* op) {
  require(a, op);
  require(b, op);
  if (a.shape() == b.shape()) return Bcast::None;
  if (a.numel() == 1) return Bcast::Left;
  if (b.numel() == 1) return Bcast::Right;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                   " are not compatible");
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  const Bcast bc = check_binary(a, b, name);
  const Shape out_shape = bc == Bcast::Left ? b.shape() : a.shape();
  const std::size_t n = numel(out_shape);
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t sa = bc == Bcast::Left ? 0 : 1;
  const std::size_t sb = bc == Bcast::Right ? 0 : 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i * sa], bv[i * sb]);
  return make_result(out_shape, std::move(out), {a, b}, [sa, sb, da, db](Node& self) {
    const Node& an = *self.inputs[0];
    const Node& bn = *self.inputs[1];
    double* ga = grad_sink(*self.inputs[0]);
    double* gb = grad_sink(*self.inputs[1]);
    const std::size_t m = self.value.size();
    for (std::size_t i = 0; i < m; ++i) {
      const double x = an.value[i * sa];
      const double y = bn.value[i * sb];
      if (ga) ga[i * sa] += self.grad[i] * da(x, y);
      if (gb) gb[i * sb] += self.grad[i] * db(x, y);
    }
  });
}

// f(x) and df/dx given (x, f(x)).
template <class F, class D>
Tensor unary(const Tensor& x, F f, D df) {
  require(x, "unary");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [df](Node& self) {
    const Node& xn = *self.inputs[0];
    double* gx = grad_sink(*self.inputs[0]);
    for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += self.grad[i] * df(xn.value[i], self.value[i]);
  });
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out.push_back(shape[i]);
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(values))) {
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = gradmod::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = gradmod::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return require(*this, "shape").shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return require(*this, "numel").value.size(); }

std::span<const double> Tensor::values() const& { return require(*this, "values").value; }

std::span<double> Tensor::mutable_values() {
  require(*this, "mutable_values");
  if (!node_->is_leaf()) throw std::logic_error("mutable_values on an interior graph node");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  require(*this, "set_requires_grad");
  if (!node_->is_leaf()) throw std::logic_error("set_requires_grad on an interior graph node");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return require(*this, "is_leaf").is_leaf(); }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return require(*this, "grad").grad; }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::clone() const {
  const auto& n = require(*this, "clone");
  return Tensor(n.shape, n.value, false);
}

void Tensor::backward() const {
  const auto& root = require(*this, "backward");
  if (root.value.size() != 1) throw ShapeError("backward() needs a single-element loss, got " + shape_str(root.shape));
  if (!root.requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

  // Interior buffers restart from zero; leaves accumulate across calls.
  for (Node* n : order)
    if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
  grad_sink(*node_)[0] += 1.0;

  for (Node* n : order)
    if (n->backward_fn) n->backward_fn(*n);
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor operator+(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor operator/(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor operator-(const Tensor& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor operator+(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
Tensor operator+(double s, const Tensor& a) { return a + s; }
Tensor operator-(const Tensor& a, double s) { return a + (-s); }
Tensor operator-(double s, const Tensor& a) {
  return unary(a, [s](double x) { return s - x; }, [](double, double) { return -1.0; });
}
Tensor operator*(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}
Tensor operator*(double s, const Tensor& a) { return a * s; }
Tensor operator/(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x / s; }, [s](double, double) { return 1.0 / s; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (slope < 0) throw std::invalid_argument("leaky_relu: negative slope");
  return unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Tensor smooth_l1(const Tensor& x, double beta) {
  if (!(beta > 0)) throw std::invalid_argument("smooth_l1: beta must be positive");
  return unary(
      x,
      [beta](double v) {
        const double a = std::abs(v);
        return a < beta ? 0.5 * v * v / beta : a - 0.5 * beta;
      },
      [beta](double v, double) {
        if (std::abs(v) < beta) return v / beta;
        return v > 0 ? 1.0 : -1.0;
      });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary(
      x, [floor](double v) { return v > floor ? v : floor; },
      [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  require(x, "sum");
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1}, {s}, {x}, [](Node& self) {
    double* gx = grad_sink(*self.inputs[0]);
    const double g = self.grad[0];
    for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) { return sum(x) / static_cast<double>(x.numel()); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  require(x, "sum_axis");
  if (axis >= x.ndim()) throw ShapeError("sum_axis: axis out of range for " + shape_str(x.shape()));
  const AxisSplit s = split_at(x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xv[(o * s.extent + e) * s.inner + i];
  return make_result(drop_axis(x.shape(), axis), std::move(out), {x}, [s](Node& self) {
    double* gx = grad_sink(*self.inputs[0]);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < s.extent; ++e)
        for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.extent + e) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  return sum_axis(x, axis) / static_cast<double>(x.dim(axis));
}

Tensor l2_norm(const Tensor& x, std::size_t axis) {
  require(x, "l2_norm");
  if (axis >= x.ndim()) throw ShapeError("l2_norm: axis out of range for " + shape_str(x.shape()));
  const AxisSplit s = split_at(x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double v = xv[(o * s.extent + e) * s.inner + i];
        out[o * s.inner + i] += v * v;
      }
  for (double& v : out) v = std::sqrt(v);
  return make_result(drop_axis(x.shape(), axis), std::move(out), {x}, [s](Node& self) {
    const Node& xn = *self.inputs[0];
    double* gx = grad_sink(*self.inputs[0]);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double norm = self.value[o * s.inner + i];
        if (norm == 0.0) continue;
        const double g = self.grad[o * s.inner + i] / norm;
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t k = (o * s.extent + e) * s.inner + i;
          gx[k] += g * xn.value[k];
        }
      }
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  if (a.numel() != b.numel())
    throw ShapeError("cosine_similarity: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const Tensor fa = reshape(a, {a.numel()});
  const Tensor fb = reshape(b, {b.numel()});
  const Tensor dot = sum(fa * fb);
  // sqrt(|a|^2 |b|^2) rather than |a| |b| so that cos(a, a) is exactly 1.
  const Tensor denom = clamp_min(sqrt(sum(square(fa)) * sum(square(fb))), eps);
  return dot / denom;
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape shape) {
  require(x, "reshape");
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    double* gx = grad_sink(*self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  require(x, "transpose");
  if (x.ndim() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return make_result({c, r}, std::move(out), {x}, [r, c](Node& self) {
    double* gx = grad_sink(*self.inputs[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = require(parts[0], "concat").shape;
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = require(p, "concat").shape;
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw ShapeError("concat: " + shape_str(s) + " does not match " + shape_str(first));
    out_shape[axis] += s[axis];
  }
  const AxisSplit total = split_at(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t ext = p.shape()[axis];
    const auto pv = p.values();
    for (std::size_t o = 0; o < total.outer; ++o)
      std::copy_n(pv.begin() + o * ext * total.inner, ext * total.inner,
                  out.begin() + (o * total.extent + off) * total.inner);
    off += ext;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(out_shape, std::move(out), inputs, [total, offsets](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      double* gp = grad_sink(*self.inputs[k]);
      if (!gp) continue;
      const std::size_t ext = self.inputs[k]->value.size() / (total.outer * total.inner);
      for (std::size_t o = 0; o < total.outer; ++o)
        for (std::size_t j = 0; j < ext * total.inner; ++j)
          gp[o * ext * total.inner + j] += self.grad[(o * total.extent + offsets[k]) * total.inner + j];
    }
  });
}

Tensor select(const Tensor& x, std::size_t index) {
  require(x, "select");
  if (x.ndim() < 2 || index >= x.dim(0))
    throw ShapeError("select: index " + std::to_string(index) + " invalid for " + shape_str(x.shape()));
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t n = numel(out_shape);
  std::vector<double> out(x.values().begin() + index * n, x.values().begin() + (index + 1) * n);
  return make_result(std::move(out_shape), std::move(out), {x}, [index, n](Node& self) {
    double* gx = grad_sink(*self.inputs[0]);
    for (std::size_t i = 0; i < n; ++i) gx[index * n + i] += self.grad[i];
  });
}

Tensor expand(const Tensor& x, const Shape& shape) {
  require(x, "expand");
  const Shape& in = x.shape();
  if (in.size() != shape.size()) throw ShapeError("expand: cannot expand " + shape_str(in) + " to " + shape_str(shape));
  for (std::size_t i = 0; i < in.size(); ++i)
    if (in[i] != shape[i] && in[i] != 1)
      throw ShapeError("expand: cannot expand " + shape_str(in) + " to " + shape_str(shape));

  // Source index for every output element.
  const std::size_t n = numel(shape);
  std::vector<std::size_t> src_stride(in.size());
  std::size_t st = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    src_stride[i] = in[i] == 1 ? 0 : st;
    st *= in[i];
  }
  auto source = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) s += idx[i] * src_stride[i];
    (*source)[k] = s;
    for (std::size_t i = idx.size(); i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  const auto xv = x.values();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = xv[(*source)[k]];
  return make_result(shape, std::move(out), {x}, [source](Node& self) {
    double* gx = grad_sink(*self.inputs[0]);
    for (std::size_t k = 0; k < source->size(); ++k) gx[(*source)[k]] += self.grad[k];
  });
}

Tensor upsample_nearest2x(const Tensor& x) {
  require(x, "upsample_nearest2x");
  if (x.ndim() != 3) throw ShapeError("upsample_nearest2x: expected [C,H,W], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto xv = x.values();
  std::vector<double> out(c * 4 * h * w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        out[(ch * 2 * h + y) * 2 * w + xx] = xv[(ch * h + y / 2) * w + xx / 2];
  return make_result({c, 2 * h, 2 * w}, std::move(out), {x}, [c, h, w](Node& self) {
    double* gx = grad_sink(*self.inputs[0]);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          gx[(ch * h + y / 2) * w + xx / 2] += self.grad[(ch * 2 * h + y) * 2 * w + xx];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a, "matmul");
  require(b, "matmul");
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " are not compatible");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MatMap(out.data(), m, n).noalias() =
      ConstMatMap(a.values().data(), m, k) * ConstMatMap(b.values().data(), k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const Node& an = *self.inputs[0];
    const Node& bn = *self.inputs[1];
    const ConstMatMap gout(self.grad.data(), m, n);
    if (double* ga = grad_sink(*self.inputs[0]))
      MatMap(ga, m, k).noalias() += gout * ConstMatMap(bn.value.data(), k, n).transpose();
    if (double* gb = grad_sink(*self.inputs[1]))
      MatMap(gb, k, n).noalias() += ConstMatMap(an.value.data(), m, k).transpose() * gout;
  });
}

namespace {

struct ConvGeometry {
  std::size_t c, h, w, o, k, stride, pad, ho, wo;
};

// Unfolds x [C,H,W] into columns [C*k*k, Ho*Wo].
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t npix = g.ho * g.wo;
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((ch * g.k + ky) * g.k + kx) * npix;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.wo + ox] = inside ? x[(ch * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* x) {
  const std::size_t npix = g.ho * g.wo;
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((ch * g.k + ky) * g.k + kx) * npix;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            x[(ch * g.h + iy) * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad) {
  require(x, "conv2d");
  require(kernel, "conv2d");
  if (x.ndim() != 3 || kernel.ndim() != 4 || kernel.dim(2) != kernel.dim(3) || kernel.dim(1) != x.dim(0))
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " and kernel " + shape_str(kernel.shape()) +
                     " are not compatible");
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), kernel.dim(0), kernel.dim(2), stride, pad, 0, 0};
  if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                     shape_str(x.shape()));
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  const std::size_t ckk = g.c * g.k * g.k, npix = g.ho * g.wo;

  auto cols = std::make_shared<std::vector<double>>(ckk * npix);
  im2col(x.values().data(), g, cols->data());
  std::vector<double> out(g.o * npix);
  MatMap(out.data(), g.o, npix).noalias() =
      ConstMatMap(kernel.values().data(), g.o, ckk) * ConstMatMap(cols->data(), ckk, npix);

  return make_result({g.o, g.ho, g.wo}, std::move(out), {x, kernel}, [g, cols, ckk, npix](Node& self) {
    const Node& kn = *self.inputs[1];
    const ConstMatMap gout(self.grad.data(), g.o, npix);
    if (double* gk = grad_sink(*self.inputs[1]))
      MatMap(gk, g.o, ckk).noalias() += gout * ConstMatMap(cols->data(), ckk, npix).transpose();
    if (double* gx = grad_sink(*self.inputs[0])) {
      std::vector<double> gcols(ckk * npix);
      MatMap(gcols.data(), ckk, npix).noalias() = ConstMatMap(kn.value.data(), g.o, ckk).transpose() * gout;
      col2im_add(gcols.data(), g, gx);
    }
  });
}

Tensor stop_gradient(const Tensor& x) {
  const auto& n = require(x, "stop_gradient");
  return Tensor(n.shape, n.value, false);
}

}  // namespace gradmod
