#pragma once

#include "scg/autodiff.hpp"
#include "scg/random.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace scg {

template <typename S>
using ParamVisitor = std::function<void(const std::string& name, Tensor<S>& t)>;
template <typename S>
using ConstParamVisitor = std::function<void(const std::string& name, const Tensor<S>& t)>;

/// Tensor of the given shape with entries drawn from U(-bound, bound).
template <typename S>
Tensor<S> uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor<S> t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(dist(rng));
  t.set_requires_grad(true);
  return t;
}

/// y = x Wᵀ + b, weight stored (out x in).
template <typename S>
struct Linear {
  Tensor<S> weight;
  Tensor<S> bias;  // empty when the layer has no bias

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.weight = uniform_tensor<S>({out, in}, bound, rng);
    if (with_bias) l.bias = uniform_tensor<S>({out}, bound, rng);
    return l;
  }

  std::size_t in_features() const { return weight.shape()[1]; }
  std::size_t out_features() const { return weight.shape()[0]; }

  Var<S> operator()(Tape<S>& tape, Var<S> x) const {
    return linear(x, tape.parameter(weight), bias.empty() ? Var<S>() : tape.parameter(bias));
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".weight", weight);
    if (!bias.empty()) fn(prefix + ".bias", bias);
  }
};

/// Stack of linear layers with ReLU after every layer.
template <typename S>
struct Mlp {
  std::vector<Linear<S>> layers;

  static Mlp init(const std::vector<std::size_t>& widths, Rng& rng) {
    Mlp m;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) m.layers.push_back(Linear<S>::init(widths[i], widths[i + 1], rng));
    return m;
  }

  Var<S> operator()(Tape<S>& tape, Var<S> x) const {
    for (const auto& l : layers) x = relu(l(tape, x));
    return x;
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(prefix + "." + std::to_string(i), fn);
  }
};

template <typename S>
struct LayerNormParams {
  Tensor<S> gain;
  Tensor<S> bias;

  static LayerNormParams init(std::size_t n) {
    LayerNormParams p{Tensor<S>::full({n}, S(1)), Tensor<S>::zeros({n})};
    p.gain.set_requires_grad(true);
    p.bias.set_requires_grad(true);
    return p;
  }

  Var<S> operator()(Tape<S>& tape, Var<S> x, S eps) const {
    return layer_norm(x, tape.parameter(gain), tape.parameter(bias), eps);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".gain", gain);
    fn(prefix + ".bias", bias);
  }
};

}  // namespace scg
