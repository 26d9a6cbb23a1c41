#include "scg/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace scg {

// ---------------------------------------------------------------------------
// Tape

template <typename S>
Var<S> Tape<S>::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("tape node limit reached");
  }
  nodes_.push_back(std::move(node));
  return Var<S>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename S>
Var<S> Tape<S>::constant(Tensor<S> value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

template <typename S>
Var<S> Tape<S>::variable(Tensor<S> value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = track_;
  return push(std::move(n));
}

template <typename S>
Var<S> Tape<S>::parameter(const Tensor<S>& param) {
  if (auto it = parameter_ids_.find(&param); it != parameter_ids_.end()) {
    return Var<S>(this, it->second);
  }
  Node n;
  n.borrowed = &param;
  n.requires_grad = track_ && param.requires_grad();
  auto v = push(std::move(n));
  parameter_ids_.emplace(&param, v.id());
  parameter_order_.push_back(v.id());
  return v;
}

template <typename S>
Var<S> Tape<S>::record(Tensor<S> value, std::vector<std::uint32_t> inputs, Backward backward) {
  Node n;
  n.owned = std::move(value);
  for (auto id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename S>
const Tensor<S>& Tape<S>::value(std::uint32_t id) const {
  const auto& n = nodes_[id];
  return n.borrowed ? *n.borrowed : *n.owned;
}

template <typename S>
typename Tape<S>::Array& Tape<S>::grad_buffer(std::uint32_t id) {
  auto& n = nodes_[id];
  if (!n.grad) n.grad = Array::Zero(static_cast<Eigen::Index>(value(id).size()));
  return *n.grad;
}

template <typename S>
typename Tape<S>::GradMap Tape<S>::grad_matrix(std::uint32_t id) {
  const auto& v = value(id);
  return GradMap(grad_buffer(id).data(), static_cast<Eigen::Index>(v.rows()),
                 static_cast<Eigen::Index>(v.cols()));
}

template <typename S>
void Tape<S>::backward(Var<S> output) {
  if (&output.tape() != this) throw std::invalid_argument("backward: variable from another tape");
  if (output.size() != 1) {
    throw DimensionError("backward needs a single-valued output, got shape " +
                         to_string(output.shape()));
  }
  for (auto& n : nodes_) n.grad.reset();
  grad_buffer(output.id()).setOnes();
  for (std::int64_t id = output.id(); id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad || !n.backward) continue;
    n.backward(*this, *n.grad);
  }
}

template <typename S>
const typename Tape<S>::Array* Tape<S>::grad(Var<S> v) const {
  const auto& n = nodes_[v.id()];
  return n.grad ? &*n.grad : nullptr;
}

template <typename S>
std::vector<std::pair<const Tensor<S>*, const typename Tape<S>::Array*>>
Tape<S>::parameter_grads() const {
  std::vector<std::pair<const Tensor<S>*, const Array*>> out;
  for (auto id : parameter_order_) {
    const auto& n = nodes_[id];
    if (n.grad) out.emplace_back(n.borrowed, &*n.grad);
  }
  return out;
}

template <typename S>
void Tape<S>::accumulate_into_parameters() const {
  for (auto [param, g] : parameter_grads()) {
    const_cast<Tensor<S>*>(param)->accumulate_grad(*g);
  }
}

template class Tape<float>;
template class Tape<double>;

// ---------------------------------------------------------------------------
// Operations

namespace {

template <typename S>
using Arr = typename Tensor<S>::Array;

template <typename S>
void same_tape(Var<S> a, Var<S> b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

template <typename S>
void accumulate(Tape<S>& t, std::uint32_t id, const Arr<S>& g) {
  if (t.requires_grad(id)) t.grad_buffer(id) += g;
}

enum class Broadcast { none, lhs, rhs };

template <typename S>
Broadcast broadcast_kind(Var<S> a, Var<S> b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (a.size() == 1) return Broadcast::lhs;
  if (b.size() == 1) return Broadcast::rhs;
  throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                       to_string(b.shape()));
}

template <typename S, typename Fn>
Var<S> unary(Var<S> x, Fn forward, std::function<Arr<S>(const Arr<S>& in, const Arr<S>& out, const Arr<S>& g)> deriv) {
  const auto& xv = x.value();
  Tensor<S> out(xv.shape(), forward(xv.data()));
  const auto xid = x.id();
  auto self = std::make_shared<std::uint32_t>(0);
  auto v = x.tape().record(std::move(out), {xid}, [xid, deriv, self](Tape<S>& t, const Arr<S>& g) {
    accumulate(t, xid, deriv(t.value(xid).data(), t.value(*self).data(), g));
  });
  *self = v.id();
  return v;
}

// Strides for reducing along one axis: index = (o * len + l) * inner + i.
struct AxisLayout {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(shape));
  }
  AxisLayout l;
  for (std::size_t d = 0; d < axis; ++d) l.outer *= shape[d];
  l.len = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) l.inner *= shape[d];
  return l;
}

template <typename S>
void require_rank2(Var<S> x, const char* op) {
  if (x.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + to_string(x.shape()));
  }
}

}  // namespace

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  same_tape(a, b, "add");
  const auto kind = broadcast_kind(a, b, "add");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<S> out = kind == Broadcast::lhs ? Tensor<S>(bv.shape(), bv.data() + av[0])
                : kind == Broadcast::rhs ? Tensor<S>(av.shape(), av.data() + bv[0])
                                         : Tensor<S>(av.shape(), av.data() + bv.data());
  const auto aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {aid, bid}, [aid, bid, kind](Tape<S>& t, const Arr<S>& g) {
    if (t.requires_grad(aid)) {
      if (kind == Broadcast::lhs) t.grad_buffer(aid)[0] += g.sum();
      else t.grad_buffer(aid) += g;
    }
    if (t.requires_grad(bid)) {
      if (kind == Broadcast::rhs) t.grad_buffer(bid)[0] += g.sum();
      else t.grad_buffer(bid) += g;
    }
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  return add(a, mul_scalar(b, S(-1)));
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  same_tape(a, b, "mul");
  const auto kind = broadcast_kind(a, b, "mul");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<S> out = kind == Broadcast::lhs ? Tensor<S>(bv.shape(), bv.data() * av[0])
                : kind == Broadcast::rhs ? Tensor<S>(av.shape(), av.data() * bv[0])
                                         : Tensor<S>(av.shape(), av.data() * bv.data());
  const auto aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {aid, bid}, [aid, bid, kind](Tape<S>& t, const Arr<S>& g) {
    const auto& x = t.value(aid).data();
    const auto& y = t.value(bid).data();
    if (t.requires_grad(aid)) {
      if (kind == Broadcast::lhs) t.grad_buffer(aid)[0] += (g * y).sum();
      else if (kind == Broadcast::rhs) t.grad_buffer(aid) += g * y[0];
      else t.grad_buffer(aid) += g * y;
    }
    if (t.requires_grad(bid)) {
      if (kind == Broadcast::rhs) t.grad_buffer(bid)[0] += (g * x).sum();
      else if (kind == Broadcast::lhs) t.grad_buffer(bid) += g * x[0];
      else t.grad_buffer(bid) += g * x;
    }
  });
}

template <typename S>
Var<S> add_scalar(Var<S> a, S value) {
  return unary<S>(
      a, [value](const Arr<S>& x) -> Arr<S> { return x + value; },
      [](const Arr<S>&, const Arr<S>&, const Arr<S>& g) -> Arr<S> { return g; });
}

template <typename S>
Var<S> mul_scalar(Var<S> a, S value) {
  return unary<S>(
      a, [value](const Arr<S>& x) -> Arr<S> { return x * value; },
      [value](const Arr<S>&, const Arr<S>&, const Arr<S>& g) -> Arr<S> { return g * value; });
}

template <typename S>
Var<S> relu(Var<S> x) {
  return unary<S>(
      x, [](const Arr<S>& v) -> Arr<S> { return v.max(S(0)); },
      [](const Arr<S>& in, const Arr<S>&, const Arr<S>& g) -> Arr<S> {
        return (in > S(0)).select(g, S(0));
      });
}

template <typename S>
Var<S> sigmoid(Var<S> x) {
  return unary<S>(
      x,
      [](const Arr<S>& v) -> Arr<S> {
        // Split by sign so exp never overflows.
        return v.unaryExpr([](S z) {
          if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
          const S e = std::exp(z);
          return e / (S(1) + e);
        });
      },
      [](const Arr<S>&, const Arr<S>& out, const Arr<S>& g) -> Arr<S> { return g * out * (S(1) - out); });
}

template <typename S>
Var<S> exp(Var<S> x) {
  return unary<S>(
      x, [](const Arr<S>& v) -> Arr<S> { return v.exp(); },
      [](const Arr<S>&, const Arr<S>& out, const Arr<S>& g) -> Arr<S> { return g * out; });
}

template <typename S>
Var<S> log(Var<S> x) {
  const auto& d = x.value().data();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d[i] > S(0))) {
      throw DomainError("log: non-positive input " + std::to_string(d[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return unary<S>(
      x, [](const Arr<S>& v) -> Arr<S> { return v.log(); },
      [](const Arr<S>& in, const Arr<S>&, const Arr<S>& g) -> Arr<S> { return g / in; });
}

template <typename S>
Var<S> pow(Var<S> x, S p) {
  if (std::floor(p) != p && (x.value().data() < S(0)).any()) {
    throw DomainError("pow: negative base with non-integer exponent");
  }
  return unary<S>(
      x, [p](const Arr<S>& v) -> Arr<S> { return v.pow(p); },
      [p](const Arr<S>& in, const Arr<S>&, const Arr<S>& g) -> Arr<S> {
        if (p == S(0)) return Arr<S>::Zero(in.size());
        return g * p * in.pow(p - S(1));
      });
}

template <typename S>
Var<S> clamp(Var<S> x, S lo, S hi) {
  return unary<S>(
      x, [lo, hi](const Arr<S>& v) -> Arr<S> { return v.max(lo).min(hi); },
      [lo, hi](const Arr<S>& in, const Arr<S>&, const Arr<S>& g) -> Arr<S> {
        return (in >= lo && in <= hi).select(g, S(0));
      });
}

template <typename S>
Var<S> sum(Var<S> x) {
  const auto xid = x.id();
  return x.tape().record(Tensor<S>::scalar(x.value().data().sum()), {xid},
                         [xid](Tape<S>& t, const Arr<S>& g) {
                           if (t.requires_grad(xid)) t.grad_buffer(xid) += g[0];
                         });
}

template <typename S>
Var<S> mean(Var<S> x) {
  return mul_scalar(sum(x), S(1) / static_cast<S>(x.size()));
}

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  same_tape(a, b, "matmul");
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  Tensor<S> out({a.shape()[0], b.shape()[1]});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix();
  const auto aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {aid, bid}, [aid, bid](Tape<S>& t, const Arr<S>& g) {
    const auto& bv = t.value(bid);
    const auto& av = t.value(aid);
    typename Tensor<S>::ConstMatrixMap gm(g.data(), static_cast<Eigen::Index>(av.rows()),
                                          static_cast<Eigen::Index>(bv.cols()));
    if (t.requires_grad(aid)) t.grad_matrix(aid).noalias() += gm * bv.matrix().transpose();
    if (t.requires_grad(bid)) t.grad_matrix(bid).noalias() += av.matrix().transpose() * gm;
  });
}

template <typename S>
Var<S> linear(Var<S> x, Var<S> weight, Var<S> bias) {
  same_tape(x, weight, "linear");
  require_rank2(x, "linear");
  require_rank2(weight, "linear");
  const auto rows = x.shape()[0];
  const auto in = x.shape()[1];
  const auto outd = weight.shape()[0];
  if (weight.shape()[1] != in) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                         to_string(weight.shape()));
  }
  const bool has_bias = bias.valid();
  if (has_bias && bias.size() != outd) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " for weight " +
                         to_string(weight.shape()));
  }
  Tensor<S> out({rows, outd});
  out.matrix().noalias() = x.value().matrix() * weight.value().matrix().transpose();
  if (has_bias) {
    out.matrix().rowwise() += bias.value().data().matrix().transpose();
  }
  const auto xid = x.id(), wid = weight.id();
  std::vector<std::uint32_t> inputs{xid, wid};
  const std::uint32_t bid = has_bias ? bias.id() : 0;
  if (has_bias) inputs.push_back(bid);
  return x.tape().record(std::move(out), std::move(inputs),
                         [xid, wid, bid, has_bias, rows, outd](Tape<S>& t, const Arr<S>& g) {
                           typename Tensor<S>::ConstMatrixMap gm(g.data(), static_cast<Eigen::Index>(rows),
                                                                 static_cast<Eigen::Index>(outd));
                           if (t.requires_grad(xid)) t.grad_matrix(xid).noalias() += gm * t.value(wid).matrix();
                           if (t.requires_grad(wid)) {
                             t.grad_matrix(wid).noalias() += gm.transpose() * t.value(xid).matrix();
                           }
                           if (has_bias && t.requires_grad(bid)) {
                             t.grad_buffer(bid) += gm.colwise().sum().transpose().array();
                           }
                         });
}

namespace {

template <typename S>
Var<S> softmax_impl(Var<S> x, const std::uint8_t* keep, std::size_t axis, const char* op) {
  const auto l = axis_layout(x.shape(), axis, op);
  const auto& in = x.value().data();
  Tensor<S> out(x.shape());
  auto& y = out.data();
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      auto idx = [&](std::size_t k) { return static_cast<Eigen::Index>((o * l.len + k) * l.inner + i); };
      S mx = -std::numeric_limits<S>::infinity();
      for (std::size_t k = 0; k < l.len; ++k) {
        if (!keep || keep[idx(k)]) mx = std::max(mx, in[idx(k)]);
      }
      if (mx == -std::numeric_limits<S>::infinity()) continue;  // fully masked: zeros
      S total = 0;
      for (std::size_t k = 0; k < l.len; ++k) {
        const S e = (!keep || keep[idx(k)]) ? std::exp(in[idx(k)] - mx) : S(0);
        y[idx(k)] = e;
        total += e;
      }
      for (std::size_t k = 0; k < l.len; ++k) y[idx(k)] /= total;
    }
  }
  const auto xid = x.id();
  auto self = std::make_shared<std::uint32_t>(0);
  auto v = x.tape().record(std::move(out), {xid}, [xid, l, self](Tape<S>& t, const Arr<S>& g) {
    if (!t.requires_grad(xid)) return;
    const auto& yv = t.value(*self).data();
    auto& gx = t.grad_buffer(xid);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        auto idx = [&](std::size_t k) { return static_cast<Eigen::Index>((o * l.len + k) * l.inner + i); };
        S dot = 0;
        for (std::size_t k = 0; k < l.len; ++k) dot += g[idx(k)] * yv[idx(k)];
        for (std::size_t k = 0; k < l.len; ++k) gx[idx(k)] += yv[idx(k)] * (g[idx(k)] - dot);
      }
    }
  });
  *self = v.id();
  return v;
}

}  // namespace

template <typename S>
Var<S> softmax(Var<S> x, std::size_t axis) {
  return softmax_impl<S>(x, nullptr, axis, "softmax");
}

template <typename S>
Var<S> masked_softmax(Var<S> x, std::span<const std::uint8_t> keep, std::size_t axis) {
  if (keep.size() != x.size()) {
    throw DimensionError("masked_softmax: mask of size " + std::to_string(keep.size()) +
                         " for shape " + to_string(x.shape()));
  }
  return softmax_impl<S>(x, keep.data(), axis, "masked_softmax");
}

template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gain, Var<S> bias, S eps) {
  const auto& shape = x.shape();
  const std::size_t d = shape.back();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias " + to_string(gain.shape()) + "/" +
                         to_string(bias.shape()) + " for input " + to_string(shape));
  }
  const std::size_t rows = x.size() / d;
  const auto di = static_cast<Eigen::Index>(d);
  const auto& xv = x.value().data();
  // Normalized activations and inverse std are kept for the backward rule.
  auto xhat = std::make_shared<Arr<S>>(xv.size());
  auto inv_std = std::make_shared<Arr<S>>(static_cast<Eigen::Index>(rows));
  Tensor<S> out(shape);
  const auto& gv = gain.value().data();
  const auto& bv = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const auto seg = xv.segment(static_cast<Eigen::Index>(r) * di, di);
    const S mu = seg.mean();
    const S var = (seg - mu).square().mean();
    const S inv = S(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<Eigen::Index>(r)] = inv;
    xhat->segment(static_cast<Eigen::Index>(r) * di, di) = (seg - mu) * inv;
    out.data().segment(static_cast<Eigen::Index>(r) * di, di) =
        gv * xhat->segment(static_cast<Eigen::Index>(r) * di, di) + bv;
  }
  const auto xid = x.id(), gid = gain.id(), bid = bias.id();
  return x.tape().record(
      std::move(out), {xid, gid, bid}, [xid, gid, bid, rows, di, xhat, inv_std](Tape<S>& t, const Arr<S>& g) {
        const auto& gv2 = t.value(gid).data();
        for (std::size_t r = 0; r < rows; ++r) {
          const auto off = static_cast<Eigen::Index>(r) * di;
          const auto gseg = g.segment(off, di);
          const auto hseg = xhat->segment(off, di);
          if (t.requires_grad(gid)) t.grad_buffer(gid) += gseg * hseg;
          if (t.requires_grad(bid)) t.grad_buffer(bid) += gseg;
          if (t.requires_grad(xid)) {
            const Arr<S> dh = gseg * gv2;
            const S n = static_cast<S>(di);
            t.grad_buffer(xid).segment(off, di) +=
                ((*inv_std)[static_cast<Eigen::Index>(r)] / n) * (n * dh - dh.sum() - hseg * (dh * hseg).sum());
          }
        }
      });
}

template <typename S>
Var<S> concat(Var<S> a, Var<S> b, std::size_t axis) {
  same_tape(a, b, "concat");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  bool ok = as.size() == bs.size() && axis < as.size();
  for (std::size_t d = 0; ok && d < as.size(); ++d) ok = d == axis || as[d] == bs[d];
  if (!ok) {
    throw DimensionError("concat: shapes " + to_string(as) + " and " + to_string(bs) +
                         " along axis " + std::to_string(axis));
  }
  Shape os = as;
  os[axis] += bs[axis];
  const auto la = axis_layout(as, axis, "concat");
  const auto lb = axis_layout(bs, axis, "concat");
  const auto ca = static_cast<Eigen::Index>(la.len * la.inner);
  const auto cb = static_cast<Eigen::Index>(lb.len * lb.inner);
  Tensor<S> out(os);
  for (std::size_t o = 0; o < la.outer; ++o) {
    const auto oi = static_cast<Eigen::Index>(o);
    out.data().segment(oi * (ca + cb), ca) = a.value().data().segment(oi * ca, ca);
    out.data().segment(oi * (ca + cb) + ca, cb) = b.value().data().segment(oi * cb, cb);
  }
  const auto aid = a.id(), bid = b.id();
  const auto outer = la.outer;
  return a.tape().record(std::move(out), {aid, bid}, [aid, bid, ca, cb, outer](Tape<S>& t, const Arr<S>& g) {
    for (std::size_t o = 0; o < outer; ++o) {
      const auto oi = static_cast<Eigen::Index>(o);
      if (t.requires_grad(aid)) t.grad_buffer(aid).segment(oi * ca, ca) += g.segment(oi * (ca + cb), ca);
      if (t.requires_grad(bid)) t.grad_buffer(bid).segment(oi * cb, cb) += g.segment(oi * (ca + cb) + ca, cb);
    }
  });
}

template <typename S>
Var<S> reshape(Var<S> x, Shape shape) {
  Tensor<S> out = x.value().reshaped(std::move(shape));
  const auto xid = x.id();
  return x.tape().record(std::move(out), {xid}, [xid](Tape<S>& t, const Arr<S>& g) { accumulate(t, xid, g); });
}

template <typename S>
Var<S> add_rowwise(Var<S> x, Var<S> row) {
  same_tape(x, row, "add_rowwise");
  require_rank2(x, "add_rowwise");
  if (row.size() != x.shape()[1]) {
    throw DimensionError("add_rowwise: row " + to_string(row.shape()) + " for " + to_string(x.shape()));
  }
  Tensor<S> out(x.shape());
  out.matrix() = x.value().matrix().rowwise() + row.value().data().matrix().transpose();
  const auto xid = x.id(), rid = row.id();
  return x.tape().record(std::move(out), {xid, rid}, [xid, rid](Tape<S>& t, const Arr<S>& g) {
    accumulate(t, xid, g);
    if (t.requires_grad(rid)) {
      const auto& xv = t.value(xid);
      typename Tensor<S>::ConstMatrixMap gm(g.data(), static_cast<Eigen::Index>(xv.rows()),
                                            static_cast<Eigen::Index>(xv.cols()));
      t.grad_buffer(rid) += gm.colwise().sum().transpose().array();
    }
  });
}

template <typename S>
Var<S> gather_rows(Var<S> x, std::span<const std::size_t> rows) {
  require_rank2(x, "gather_rows");
  const auto nrows = x.shape()[0];
  const auto ncols = x.shape()[1];
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  Tensor<S> out({rows.size(), ncols});
  const auto& xm = x.value().matrix();
  auto om = out.matrix();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= nrows) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " +
                           to_string(x.shape()));
    }
    om.row(static_cast<Eigen::Index>(r)) = xm.row(static_cast<Eigen::Index>(rows[r]));
  }
  const auto xid = x.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape().record(std::move(out), {xid}, [xid, idx = std::move(idx), ncols](Tape<S>& t, const Arr<S>& g) {
    if (!t.requires_grad(xid)) return;
    auto gx = t.grad_matrix(xid);
    typename Tensor<S>::ConstMatrixMap gm(g.data(), static_cast<Eigen::Index>(idx.size()),
                                          static_cast<Eigen::Index>(ncols));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      gx.row(static_cast<Eigen::Index>(idx[r])) += gm.row(static_cast<Eigen::Index>(r));
    }
  });
}

template <typename S>
Var<S> row_scale(Var<S> x, Var<S> weights) {
  same_tape(x, weights, "row_scale");
  require_rank2(x, "row_scale");
  if (weights.size() != x.shape()[0]) {
    throw DimensionError("row_scale: weights " + to_string(weights.shape()) + " for rows of " +
                         to_string(x.shape()));
  }
  Tensor<S> out(x.shape());
  out.matrix() = x.value().matrix().array().colwise() * weights.value().data();
  const auto xid = x.id(), wid = weights.id();
  return x.tape().record(std::move(out), {xid, wid}, [xid, wid](Tape<S>& t, const Arr<S>& g) {
    const auto& xv = t.value(xid);
    typename Tensor<S>::ConstMatrixMap gm(g.data(), static_cast<Eigen::Index>(xv.rows()),
                                          static_cast<Eigen::Index>(xv.cols()));
    if (t.requires_grad(xid)) {
      t.grad_matrix(xid).array() += gm.array().colwise() * t.value(wid).data();
    }
    if (t.requires_grad(wid)) {
      t.grad_buffer(wid) += (gm.array() * xv.matrix().array()).rowwise().sum();
    }
  });
}

template <typename S>
Var<S> segment_sum(Var<S> x, std::span<const std::size_t> segment, std::size_t segments) {
  require_rank2(x, "segment_sum");
  if (segment.size() != x.shape()[0]) {
    throw DimensionError("segment_sum: " + std::to_string(segment.size()) + " segment ids for " +
                         to_string(x.shape()));
  }
  const auto ncols = x.shape()[1];
  Tensor<S> out({segments, ncols});
  auto om = out.matrix();
  const auto& xm = x.value().matrix();
  for (std::size_t r = 0; r < segment.size(); ++r) {
    if (segment[r] >= segments) throw DimensionError("segment_sum: segment id out of range");
    om.row(static_cast<Eigen::Index>(segment[r])) += xm.row(static_cast<Eigen::Index>(r));
  }
  const auto xid = x.id();
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return x.tape().record(std::move(out), {xid},
                         [xid, seg = std::move(seg), segments, ncols](Tape<S>& t, const Arr<S>& g) {
                           if (!t.requires_grad(xid)) return;
                           auto gx = t.grad_matrix(xid);
                           typename Tensor<S>::ConstMatrixMap gm(g.data(), static_cast<Eigen::Index>(segments),
                                                                 static_cast<Eigen::Index>(ncols));
                           for (std::size_t r = 0; r < seg.size(); ++r) {
                             gx.row(static_cast<Eigen::Index>(r)) += gm.row(static_cast<Eigen::Index>(seg[r]));
                           }
                         });
}

template <typename S>
Var<S> take(Var<S> x, std::span<const std::size_t> flat) {
  if (flat.empty()) throw DimensionError("take: empty index list");
  Tensor<S> out({flat.size()});
  const auto& xv = x.value().data();
  for (std::size_t k = 0; k < flat.size(); ++k) {
    if (flat[k] >= x.size()) throw DimensionError("take: index out of range for " + to_string(x.shape()));
    out[k] = xv[static_cast<Eigen::Index>(flat[k])];
  }
  const auto xid = x.id();
  std::vector<std::size_t> idx(flat.begin(), flat.end());
  return x.tape().record(std::move(out), {xid}, [xid, idx = std::move(idx)](Tape<S>& t, const Arr<S>& g) {
    if (!t.requires_grad(xid)) return;
    auto& gx = t.grad_buffer(xid);
    for (std::size_t k = 0; k < idx.size(); ++k) gx[static_cast<Eigen::Index>(idx[k])] += g[static_cast<Eigen::Index>(k)];
  });
}

#define SCG_INSTANTIATE_OPS(S)                                                              \
  template Var<S> add<S>(Var<S>, Var<S>);                                                   \
  template Var<S> sub<S>(Var<S>, Var<S>);                                                   \
  template Var<S> mul<S>(Var<S>, Var<S>);                                                   \
  template Var<S> add_scalar<S>(Var<S>, S);                                                 \
  template Var<S> mul_scalar<S>(Var<S>, S);                                                 \
  template Var<S> relu<S>(Var<S>);                                                          \
  template Var<S> sigmoid<S>(Var<S>);                                                       \
  template Var<S> exp<S>(Var<S>);                                                           \
  template Var<S> log<S>(Var<S>);                                                           \
  template Var<S> pow<S>(Var<S>, S);                                                        \
  template Var<S> clamp<S>(Var<S>, S, S);                                                   \
  template Var<S> sum<S>(Var<S>);                                                           \
  template Var<S> mean<S>(Var<S>);                                                          \
  template Var<S> matmul<S>(Var<S>, Var<S>);                                                \
  template Var<S> linear<S>(Var<S>, Var<S>, Var<S>);                                        \
  template Var<S> softmax<S>(Var<S>, std::size_t);                                          \
  template Var<S> masked_softmax<S>(Var<S>, std::span<const std::uint8_t>, std::size_t);    \
  template Var<S> layer_norm<S>(Var<S>, Var<S>, Var<S>, S);                                 \
  template Var<S> concat<S>(Var<S>, Var<S>, std::size_t);                                   \
  template Var<S> reshape<S>(Var<S>, Shape);                                                \
  template Var<S> add_rowwise<S>(Var<S>, Var<S>);                                           \
  template Var<S> gather_rows<S>(Var<S>, std::span<const std::size_t>);                     \
  template Var<S> row_scale<S>(Var<S>, Var<S>);                                             \
  template Var<S> segment_sum<S>(Var<S>, std::span<const std::size_t>, std::size_t);        \
  template Var<S> take<S>(Var<S>, std::span<const std::size_t>);

SCG_INSTANTIATE_OPS(float)
SCG_INSTANTIATE_OPS(double)

#undef SCG_INSTANTIATE_OPS

}  // namespace scg
