#pragma once

#include "scg/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace scg {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid for the
/// lifetime of the tape that created it.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor<Scalar>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode differentiation tape, recorded dynamically per forward pass.
///
/// Nodes are appended in evaluation order, so the recording order is a
/// topological order and `backward` is a single reverse sweep. Parameters
/// are borrowed, never copied: several tapes may read the same parameter
/// tensors concurrently, each keeping its own gradient buffers.
template <typename Scalar>
class Tape {
 public:
  using Array = typename Tensor<Scalar>::Array;
  using GradMap = Eigen::Map<typename Tensor<Scalar>::RowMatrix>;
  using Backward = std::function<void(Tape&, const Array& grad_out)>;

  Tape() = default;
  /// With `track_gradients` false nothing on the tape requires a gradient
  /// and no backward rules are kept (inference).
  explicit Tape(bool track_gradients) : track_(track_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Owned value that never receives a gradient.
  Var<Scalar> constant(Tensor<Scalar> value);
  /// Owned value that receives a gradient.
  Var<Scalar> variable(Tensor<Scalar> value);
  /// Borrowed tensor; differentiable iff `param.requires_grad()`. Repeated
  /// calls with the same tensor return the same node.
  Var<Scalar> parameter(const Tensor<Scalar>& param);

  Var<Scalar> record(Tensor<Scalar> value, std::vector<std::uint32_t> inputs, Backward backward);

  const Tensor<Scalar>& value(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(output)/d(output) = 1 and sweeps the tape once in reverse.
  void backward(Var<Scalar> output);

  /// Gradient reaching `v` in the last backward sweep, or nullptr.
  const Array* grad(Var<Scalar> v) const;
  /// Gradients of every borrowed parameter that received one, in the order
  /// the parameters were first used.
  std::vector<std::pair<const Tensor<Scalar>*, const Array*>> parameter_grads() const;
  /// Adds this tape's parameter gradients into the parameters' own buffers.
  void accumulate_into_parameters() const;

  // Used by backward rules.
  Array& grad_buffer(std::uint32_t id);
  GradMap grad_matrix(std::uint32_t id);

 private:
  struct Node {
    std::optional<Tensor<Scalar>> owned;
    const Tensor<Scalar>* borrowed = nullptr;
    std::vector<std::uint32_t> inputs;
    Backward backward;
    bool requires_grad = false;
    std::optional<Array> grad;
  };

  Var<Scalar> push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor<Scalar>*, std::uint32_t> parameter_ids_;
  std::vector<std::uint32_t> parameter_order_;
  bool track_ = true;
};

// Elementwise arithmetic. Operands must have equal shapes, or one operand
// may hold a single value (scalar broadcast).
template <typename S> Var<S> add(Var<S> a, Var<S> b);
template <typename S> Var<S> sub(Var<S> a, Var<S> b);
template <typename S> Var<S> mul(Var<S> a, Var<S> b);
template <typename S> Var<S> add_scalar(Var<S> a, S value);
template <typename S> Var<S> mul_scalar(Var<S> a, S value);

template <typename S> Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <typename S> Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }
template <typename S> Var<S> operator*(Var<S> a, Var<S> b) { return mul(a, b); }
template <typename S> Var<S> operator+(Var<S> a, S v) { return add_scalar(a, v); }
template <typename S> Var<S> operator*(Var<S> a, S v) { return mul_scalar(a, v); }
template <typename S> Var<S> operator*(S v, Var<S> a) { return mul_scalar(a, v); }
template <typename S> Var<S> operator-(S v, Var<S> a) { return add_scalar(mul_scalar(a, S(-1)), v); }

/// max(x, 0); the subgradient at 0 is 0.
template <typename S> Var<S> relu(Var<S> x);
template <typename S> Var<S> sigmoid(Var<S> x);
template <typename S> Var<S> exp(Var<S> x);
/// Throws DomainError on any non-positive input.
template <typename S> Var<S> log(Var<S> x);
/// x^p for x >= 0 (any real x when p is an integer).
template <typename S> Var<S> pow(Var<S> x, S p);
/// Gradient passes only where lo <= x <= hi.
template <typename S> Var<S> clamp(Var<S> x, S lo, S hi);

template <typename S> Var<S> sum(Var<S> x);
template <typename S> Var<S> mean(Var<S> x);

/// (m x k) * (k x n).
template <typename S> Var<S> matmul(Var<S> a, Var<S> b);
/// x Wᵀ + b for x (r x in), W (out x in), b (out). `bias` may be invalid.
template <typename S> Var<S> linear(Var<S> x, Var<S> weight, Var<S> bias);

template <typename S> Var<S> softmax(Var<S> x, std::size_t axis);
/// Softmax over entries whose mask byte is nonzero; masked entries are 0.
/// A slice that is entirely masked yields all zeros.
template <typename S>
Var<S> masked_softmax(Var<S> x, std::span<const std::uint8_t> keep, std::size_t axis);
/// Normalizes over the last axis, then applies gain and bias (length of the last axis).
template <typename S> Var<S> layer_norm(Var<S> x, Var<S> gain, Var<S> bias, S eps);
template <typename S> Var<S> concat(Var<S> a, Var<S> b, std::size_t axis);
template <typename S> Var<S> reshape(Var<S> x, Shape shape);

/// x (rows x cols) + row (cols), the row broadcast over all rows.
template <typename S> Var<S> add_rowwise(Var<S> x, Var<S> row);
/// Row gather for rank-2 x; backward scatter-adds.
template <typename S> Var<S> gather_rows(Var<S> x, std::span<const std::size_t> rows);
/// Multiplies row r of x (rows x cols) by weights[r].
template <typename S> Var<S> row_scale(Var<S> x, Var<S> weights);
/// out[segment[r], :] += x[r, :], with `segments` output rows.
template <typename S>
Var<S> segment_sum(Var<S> x, std::span<const std::size_t> segment, std::size_t segments);
/// Rank-1 gather of flat element indices.
template <typename S> Var<S> take(Var<S> x, std::span<const std::size_t> flat);

}  // namespace scg
