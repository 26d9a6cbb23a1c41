#pragma once

#include "scg/layers.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scg {

enum class FusionOp { product, sum, concat };

std::string_view to_string(FusionOp op);
FusionOp parse_fusion_op(std::string_view name);

/// Closed-form parameter count of a multi-branch fusion module. Throws
/// std::invalid_argument when `cardinality` does not divide `n`.
std::size_t mbf_param_count(std::size_t appearance_dim, std::size_t spatial_dim, std::size_t n,
                            std::size_t cardinality, FusionOp op);

/// Multi-branch fusion: both modalities are projected into `c` subspaces of
/// width n/c, fused per branch, passed through ReLU, projected back to n
/// and summed over branches in branch order, plus one shared output bias.
///
///   out = bias + Σ_b W_out^b · ReLU(fuse(W_a^b a + β_a^b, W_s^b s + β_s^b))
///
/// Rows of `a` and `s` are independent samples.
template <typename S>
class Mbf {
 public:
  struct Branch {
    Linear<S> appearance;  // n_a -> n/c
    Linear<S> spatial;     // n_s -> n/c
    Linear<S> output;      // n/c (2n/c for concat) -> n, no bias
  };

  Mbf() = default;

  static Mbf init(std::size_t appearance_dim, std::size_t spatial_dim, std::size_t n,
                  std::size_t cardinality, FusionOp op, Rng& rng) {
    mbf_param_count(appearance_dim, spatial_dim, n, cardinality, op);  // validates c | n
    const std::size_t sub = n / cardinality;
    const std::size_t fused = op == FusionOp::concat ? 2 * sub : sub;
    Mbf m;
    m.op_ = op;
    for (std::size_t b = 0; b < cardinality; ++b) {
      Branch br;
      br.appearance = Linear<S>::init(appearance_dim, sub, rng);
      br.spatial = Linear<S>::init(spatial_dim, sub, rng);
      br.output = Linear<S>::init(fused, n, rng, /*with_bias=*/false);
      m.branches_.push_back(std::move(br));
    }
    m.bias_ = Tensor<S>::zeros({n});
    m.bias_.set_requires_grad(true);
    return m;
  }

  FusionOp fusion() const noexcept { return op_; }
  std::size_t cardinality() const noexcept { return branches_.size(); }
  std::size_t output_dim() const { return bias_.size(); }
  std::size_t appearance_dim() const { return branches_.front().appearance.in_features(); }
  std::size_t spatial_dim() const { return branches_.front().spatial.in_features(); }

  std::vector<Branch>& branches() noexcept { return branches_; }
  const std::vector<Branch>& branches() const noexcept { return branches_; }
  Tensor<S>& bias() noexcept { return bias_; }

  /// Spatially conditioned forward pass.
  Var<S> operator()(Tape<S>& tape, Var<S> a, Var<S> s) const { return forward(tape, a, s); }

  /// Forward pass without the spatial modality: the spatial projection is
  /// replaced by the fusion identity (1 for product, 0 for sum and concat),
  /// so the module reduces to a one-hidden-layer network on `a`.
  Var<S> unconditioned(Tape<S>& tape, Var<S> a) const { return forward(tape, a, std::nullopt); }

  std::size_t parameter_count() const {
    std::size_t total = bias_.size();
    for (const auto& b : branches_) {
      total += b.appearance.weight.size() + b.appearance.bias.size() + b.spatial.weight.size() +
               b.spatial.bias.size() + b.output.weight.size();
    }
    return total;
  }

  void visit(const std::string& name, const ParamVisitor<S>& fn) {
    const std::string prefix = "mbf_" + name;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
      auto& br = branches_[b];
      const std::string p = prefix + ".branch" + std::to_string(b);
      fn(p + ".W_a", br.appearance.weight);
      fn(p + ".b_a", br.appearance.bias);
      fn(p + ".W_s", br.spatial.weight);
      fn(p + ".b_s", br.spatial.bias);
      fn(p + ".W_out", br.output.weight);
    }
    fn(prefix + ".bias", bias_);
  }

 private:
  Var<S> forward(Tape<S>& tape, Var<S> a, std::optional<Var<S>> s) const {
    if (a.shape().size() != 2 || a.shape()[1] != appearance_dim()) {
      throw DimensionError("mbf: appearance input " + to_string(a.shape()) + ", expected (rows," +
                           std::to_string(appearance_dim()) + ")");
    }
    if (s && (s->shape().size() != 2 || s->shape()[1] != spatial_dim() || s->shape()[0] != a.shape()[0])) {
      throw DimensionError("mbf: spatial input " + to_string(s->shape()) + ", expected (" +
                           std::to_string(a.shape()[0]) + "," + std::to_string(spatial_dim()) + ")");
    }
    Var<S> out;
    for (const auto& br : branches_) {
      Var<S> ha = br.appearance(tape, a);
      Var<S> fused;
      if (s) {
        Var<S> hs = br.spatial(tape, *s);
        switch (op_) {
          case FusionOp::product: fused = mul(ha, hs); break;
          case FusionOp::sum: fused = add(ha, hs); break;
          case FusionOp::concat: fused = concat(ha, hs, 1); break;
        }
      } else if (op_ == FusionOp::concat) {
        fused = concat(ha, tape.constant(Tensor<S>(ha.shape())), 1);
      } else {
        fused = ha;
      }
      Var<S> branch_out = br.output(tape, relu(fused));
      out = out.valid() ? add(out, branch_out) : branch_out;
    }
    return add_rowwise(out, tape.parameter(bias_));
  }

  FusionOp op_ = FusionOp::product;
  std::vector<Branch> branches_;
  Tensor<S> bias_;
};

}  // namespace scg
