#include "scg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace scg {

namespace {

double evaluate(const std::function<Var<double>(Tape<double>&)>& f) {
  Tape<double> tape;
  return f(tape).value().item();
}

}  // namespace

GradcheckReport gradcheck_parameters(const std::function<Var<double>(Tape<double>&)>& f,
                                     const std::vector<Tensor<double>*>& params, double step,
                                     double tol) {
  GradcheckReport report;

  std::vector<Tensor<double>::Array> analytic(params.size());
  {
    Tape<double> tape;
    auto out = f(tape);
    tape.backward(out);
    for (std::size_t p = 0; p < params.size(); ++p) {
      analytic[p] = Tensor<double>::Array::Zero(static_cast<Eigen::Index>(params[p]->size()));
    }
    for (auto [tensor, g] : tape.parameter_grads()) {
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (params[p] == tensor) analytic[p] = *g;
      }
    }
  }

  const double f0 = evaluate(f);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& t = *params[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double a = analytic[p][static_cast<Eigen::Index>(i)];
      if (!std::isfinite(a)) {
        report.non_finite = "non-finite analytic gradient at tensor " + std::to_string(p) +
                            ", index " + std::to_string(i);
        report.passed = false;
        return report;
      }
      const double saved = t[i];
      t[i] = saved + step;
      const double fp = evaluate(f);
      t[i] = saved - step;
      const double fm = evaluate(f);
      t[i] = saved;

      const double central = (fp - fm) / (2 * step);
      const double forward = (fp - f0) / step;
      const double backward = (f0 - fm) / step;
      ++report.checked;
      double err = std::abs(a - central) / std::max(1.0, std::abs(a));
      if (std::abs(forward - backward) > tol * std::max(1.0, std::abs(central))) {
        // At a kink the analytic value must lie between the one-sided slopes.
        report.kinks.emplace_back(p, i);
        const double lo = std::min(forward, backward), hi = std::max(forward, backward);
        err = std::max({0.0, lo - a, a - hi}) / std::max(1.0, std::abs(a));
      }
      if (err > report.max_rel_error || !std::isfinite(err)) {
        report.max_rel_error = err;
        report.worst_tensor = p;
        report.worst_index = i;
      }
    }
  }
  report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error <= tol;
  return report;
}

GradcheckReport gradcheck(const ScalarFn& f, std::vector<Tensor<double>> inputs, double step,
                          double tol) {
  std::vector<Tensor<double>*> ptrs;
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    ptrs.push_back(&t);
  }
  auto wrapped = [&](Tape<double>& tape) {
    std::vector<Var<double>> vars;
    for (auto& t : inputs) vars.push_back(tape.parameter(t));
    return f(tape, vars);
  };
  return gradcheck_parameters(wrapped, ptrs, step, tol);
}

GradcheckReport gradcheck(const std::function<Var<double>(Tape<double>&, Var<double>)>& f,
                          const Tensor<double>& x, double step, double tol) {
  return gradcheck(
      [&](Tape<double>& tape, std::span<const Var<double>> v) { return f(tape, v[0]); }, {x}, step,
      tol);
}

}  // namespace scg
