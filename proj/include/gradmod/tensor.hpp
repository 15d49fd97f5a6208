#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradmod {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  // Creation order. Backward visits reachable nodes by descending seq, which
  // is a valid reverse topological order because inputs always precede outputs.
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return inputs.empty(); }
};

}  // namespace detail

/// Dense row-major array of doubles that records the operations applied to it
/// so that `backward()` can propagate gradients to every leaf with
/// `requires_grad` set. Copies share the underlying node (handle semantics).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const&;
  /// Deleted so a range-for over a temporary's values does not dangle.
  std::span<const double> values() const&& = delete;
  /// Write access is restricted to leaves; mutating an interior node would
  /// silently invalidate the saved values its consumers rely on.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 and accumulates into every reachable
  /// requires_grad tensor. `this` must hold a single element.
  void backward() const;

  /// Fresh leaf holding a copy of the values, detached from any graph.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Elementwise arithmetic. Operands must share a shape, or one of them must
// hold exactly one element (scalar-tensor broadcasting); nothing else is
// broadcast implicitly, use expand() for that.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator+(const Tensor& a, double s);
Tensor operator+(double s, const Tensor& a);
Tensor operator-(const Tensor& a, double s);
Tensor operator-(double s, const Tensor& a);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);
Tensor operator/(const Tensor& a, double s);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor smooth_l1(const Tensor& x, double beta);
Tensor clamp_min(const Tensor& x, double floor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduces `axis` away; the result has ndim() - 1 dimensions ({1} for a vector).
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);
/// Euclidean norm along `axis`, which is reduced away.
Tensor l2_norm(const Tensor& x, std::size_t axis);
/// Cosine of the angle between two equally sized tensors viewed as vectors.
/// The denominator is floored at `eps`.
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-8);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Row `index` of the leading axis.
Tensor select(const Tensor& x, std::size_t index);
/// Explicit broadcast: every dimension of `x` must equal the target or be 1.
Tensor expand(const Tensor& x, const Shape& shape);
/// [C,H,W] -> [C,2H,2W] by pixel replication.
Tensor upsample_nearest2x(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
/// Cross-correlation of x [C,H,W] with kernel [O,C,k,k].
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad);

/// Value copy through which no gradient flows.
Tensor stop_gradient(const Tensor& x);

}  // namespace gradmod
