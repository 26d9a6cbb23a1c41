#include "doctest.h"

#include "scg/gradcheck.hpp"
#include "scg/random.hpp"

#include <cmath>

using namespace scg;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng = make_rng(seed, "autodiff_test");
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

void require_pass(const GradcheckReport& r) {
  INFO("max relative error " << r.max_rel_error << " at tensor " << r.worst_tensor << " index " << r.worst_index);
  CHECK_FALSE(r.non_finite.has_value());
  CHECK(r.passed);
  CHECK(r.max_rel_error <= 1e-4);
}

/// Fixed random weights turn any tensor into a generic scalar.
Var<double> project(Tape<double>& tape, Var<double> x, std::uint64_t seed = 99) {
  return sum(mul(x, tape.constant(random_tensor(x.shape(), seed))));
}

}  // namespace

TEST_CASE("matmul example") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 2}, {1, 0, 0, 0}));
  auto b = tape.constant(Tensor<double>({2, 1}, {5, 7}));
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.value()[0] == 5);
  CHECK(c.value()[1] == 0);
}

TEST_CASE("d(x + x)/dx = 2") {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({3}, {0.5, -1, 2}));
  tape.backward(sum(add(x, x)));
  CHECK((*tape.grad(x) == 2.0).all());
}

TEST_CASE("gradients accumulate across uses") {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({1}, {3}));
  tape.backward(mul(x, x) + mul_scalar(x, 2.0));
  CHECK((*tape.grad(x))[0] == doctest::Approx(8.0));
}

TEST_CASE("softmax sums to one and masked entries are zero") {
  Tape<double> tape;
  auto x = tape.constant(random_tensor({3, 4}, 1, -5, 5));
  auto rows = softmax(x, 1);
  auto cols = softmax(x, 0);
  for (std::size_t r = 0; r < 3; ++r) CHECK(rows.value().matrix().row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t c = 0; c < 4; ++c) CHECK(cols.value().matrix().col(c).sum() == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<std::uint8_t> keep{1, 0, 1, 1, 0, 0, 0, 0, 1, 1, 1, 0};
  auto m = masked_softmax(x, std::span<const std::uint8_t>(keep), 1);
  CHECK(m.value().at(0, 1) == 0.0);
  CHECK(m.value().matrix().row(0).sum() == doctest::Approx(1.0));
  CHECK(m.value().matrix().row(1).sum() == 0.0);  // fully masked row
  CHECK(m.value().matrix().row(2).sum() == doctest::Approx(1.0));
}

TEST_CASE("softmax is stable for large logits") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({1, 3}, {1000, 1000, -1000}));
  auto s = softmax(x, 1);
  CHECK(s.value()[0] == doctest::Approx(0.5));
  CHECK(s.value()[2] == 0.0);
}

TEST_CASE("layer norm example") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({1, 2}, {1, 3}));
  auto y = layer_norm(x, tape.constant(Tensor<double>::full({2}, 1)), tape.constant(Tensor<double>::zeros({2})), 1e-5);
  CHECK(y.value()[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y.value()[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("relu subgradient at zero is zero") {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({3}, {-1, 0, 2}));
  tape.backward(sum(relu(x)));
  const auto& g = *tape.grad(x);
  CHECK(g[0] == 0);
  CHECK(g[1] == 0);
  CHECK(g[2] == 1);
}

TEST_CASE("domain errors") {
  Tape<double> tape;
  CHECK_THROWS_AS(log(tape.constant(Tensor<double>({2}, {1, 0}))), DomainError);
  CHECK_THROWS_AS(pow(tape.constant(Tensor<double>({1}, {-2})), 0.5), DomainError);
  CHECK(pow(tape.constant(Tensor<double>({1}, {-2})), 2.0).value()[0] == 4);
  CHECK(pow(tape.constant(Tensor<double>({1}, {0.5})), 2.8).value()[0] == doctest::Approx(0.143587).epsilon(1e-5));
}

TEST_CASE("dimension errors") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 3}));
  auto b = tape.constant(Tensor<double>({2, 2}));
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(concat(a, tape.constant(Tensor<double>({3, 3})), 1), DimensionError);
  CHECK_THROWS_AS(tape.backward(a), DimensionError);
  const std::vector<std::size_t> bad{5};
  CHECK_THROWS_AS(gather_rows(a, std::span<const std::size_t>(bad)), DimensionError);
}

TEST_CASE("operands from different tapes are rejected") {
  Tape<double> t1, t2;
  CHECK_THROWS_AS(add(t1.constant(Tensor<double>({1})), t2.constant(Tensor<double>({1}))), std::invalid_argument);
}

TEST_CASE("parameters receive per-tape gradients and accumulate on request") {
  Tensor<double> w({2}, {1, 2});
  w.set_requires_grad(true);
  for (int run = 0; run < 2; ++run) {
    Tape<double> tape;
    auto v = tape.parameter(w);
    auto v2 = tape.parameter(w);  // the same tensor maps to one node
    CHECK(v.id() == v2.id());
    tape.backward(sum(mul(v, v)));
    tape.accumulate_into_parameters();
  }
  CHECK((*w.grad())[0] == doctest::Approx(4.0));
  CHECK((*w.grad())[1] == doctest::Approx(8.0));
}

TEST_CASE("no-grad tape records values only") {
  Tensor<double> w({2}, {1, 2});
  w.set_requires_grad(true);
  Tape<double> tape(false);
  auto y = sum(mul(tape.parameter(w), tape.parameter(w)));
  CHECK(y.value().item() == doctest::Approx(5.0));
  CHECK_FALSE(tape.requires_grad(y.id()));
}

TEST_CASE("gradcheck of every primitive") {
  const auto a = random_tensor({3, 4}, 1);
  const auto b = random_tensor({3, 4}, 2);
  const auto pos = random_tensor({3, 4}, 3, 0.2, 2.0);

  SUBCASE("elementwise") {
    require_pass(gradcheck([](Tape<double>& t, std::span<const Var<double>> v) { return project(t, add(v[0], v[1])); }, {a, b}));
    require_pass(gradcheck([](Tape<double>& t, std::span<const Var<double>> v) { return project(t, sub(v[0], v[1])); }, {a, b}));
    require_pass(gradcheck([](Tape<double>& t, std::span<const Var<double>> v) { return project(t, mul(v[0], v[1])); }, {a, b}));
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, add_scalar(x, 0.3)); }, a));
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, mul_scalar(x, -1.7)); }, a));
  }
  SUBCASE("scalar broadcast") {
    const auto s = random_tensor({1}, 4);
    require_pass(gradcheck([](Tape<double>& t, std::span<const Var<double>> v) { return project(t, mul(v[0], v[1])); }, {a, s}));
    require_pass(gradcheck([](Tape<double>& t, std::span<const Var<double>> v) { return project(t, add(v[1], v[0])); }, {a, s}));
  }
  SUBCASE("nonlinearities") {
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, relu(x)); }, a));
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, sigmoid(x)); }, a));
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, exp(x)); }, a));
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, log(x)); }, pos));
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, pow(x, 2.8)); }, pos));
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, clamp(x, -0.5, 0.5)); }, a));
  }
  SUBCASE("reductions") {
    require_pass(gradcheck([](Tape<double>&, Var<double> x) { return sum(mul(x, x)); }, a));
    require_pass(gradcheck([](Tape<double>&, Var<double> x) { return mean(mul(x, x)); }, a));
  }
  SUBCASE("matrix products") {
    const auto w = random_tensor({5, 4}, 5);
    const auto bias = random_tensor({5}, 6);
    const auto m = random_tensor({4, 2}, 7);
    require_pass(gradcheck([](Tape<double>& t, std::span<const Var<double>> v) { return project(t, matmul(v[0], v[1])); }, {a, m}));
    require_pass(gradcheck(
        [](Tape<double>& t, std::span<const Var<double>> v) { return project(t, linear(v[0], v[1], v[2])); }, {a, w, bias}));
    require_pass(gradcheck(
        [](Tape<double>& t, std::span<const Var<double>> v) { return project(t, linear(v[0], v[1], Var<double>())); },
        {a, w}));
  }
  SUBCASE("normalizations") {
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, softmax(x, 1)); }, a));
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, softmax(x, 0)); }, a));
    const std::vector<std::uint8_t> keep{1, 0, 1, 1, 0, 0, 0, 0, 1, 1, 1, 0};
    for (std::size_t axis : {0, 1}) {
      require_pass(gradcheck(
          [&](Tape<double>& t, Var<double> x) {
            return project(t, masked_softmax(x, std::span<const std::uint8_t>(keep), axis));
          },
          a));
    }
    const auto gain = random_tensor({4}, 8);
    const auto beta = random_tensor({4}, 9);
    require_pass(gradcheck(
        [](Tape<double>& t, std::span<const Var<double>> v) { return project(t, layer_norm(v[0], v[1], v[2], 1e-5)); },
        {a, gain, beta}));
  }
  SUBCASE("structure") {
    const auto row = random_tensor({4}, 10);
    const auto w = random_tensor({3}, 11);
    const std::vector<std::size_t> rows{2, 0, 2, 1};
    const std::vector<std::size_t> segment{1, 0, 1};
    const std::vector<std::size_t> flat{11, 0, 5, 5};
    require_pass(gradcheck([](Tape<double>& t, std::span<const Var<double>> v) { return project(t, concat(v[0], v[1], 0)); }, {a, b}));
    require_pass(gradcheck([](Tape<double>& t, std::span<const Var<double>> v) { return project(t, concat(v[0], v[1], 1)); }, {a, b}));
    require_pass(gradcheck([](Tape<double>& t, Var<double> x) { return project(t, reshape(x, {2, 6})); }, a));
    require_pass(gradcheck(
        [](Tape<double>& t, std::span<const Var<double>> v) { return project(t, add_rowwise(v[0], v[1])); }, {a, row}));
    require_pass(gradcheck(
        [&](Tape<double>& t, Var<double> x) { return project(t, gather_rows(x, std::span<const std::size_t>(rows))); }, a));
    require_pass(gradcheck(
        [](Tape<double>& t, std::span<const Var<double>> v) { return project(t, row_scale(v[0], v[1])); }, {a, w}));
    require_pass(gradcheck(
        [&](Tape<double>& t, Var<double> x) {
          return project(t, segment_sum(x, std::span<const std::size_t>(segment), 2));
        },
        a));
    require_pass(gradcheck(
        [&](Tape<double>& t, Var<double> x) { return project(t, take(x, std::span<const std::size_t>(flat))); }, a));
  }
}

TEST_CASE("gradcheck flags a wrong gradient") {
  // A primitive whose backward is off by a factor of two.
  auto broken = [](Tape<double>& tape, Var<double> x) {
    Tensor<double> value = x.value();
    value.data() = value.data().square();
    auto y = tape.record(std::move(value), {x.id()}, [x](Tape<double>& t, const Tensor<double>::Array& g) {
      t.grad_buffer(x.id()) += 4.0 * g * x.value().data();
    });
    return sum(y);
  };
  const auto r = gradcheck(broken, random_tensor({4}, 12));
  CHECK_FALSE(r.passed);
  CHECK(r.max_rel_error > 1e-2);
}

TEST_CASE("gradcheck accepts a relu exactly at zero") {
  const auto r = gradcheck([](Tape<double>&, Var<double> x) { return sum(relu(x)); }, Tensor<double>({3}, {0.0, 1, -1}));
  CHECK(r.passed);
  CHECK(r.kinks.size() == 1);
}

TEST_CASE("float tapes agree with double tapes") {
  const auto a = random_tensor({3, 4}, 13);
  Tape<double> td;
  auto yd = sum(sigmoid(layer_norm(td.constant(a), td.constant(Tensor<double>::full({4}, 1)),
                                   td.constant(Tensor<double>::zeros({4})), 1e-5)));
  Tape<float> tf;
  auto yf = sum(sigmoid(layer_norm(tf.constant(a.cast<float>()), tf.constant(Tensor<float>::full({4}, 1)),
                                   tf.constant(Tensor<float>::zeros({4})), 1e-5f)));
  CHECK(static_cast<double>(yf.value().item()) == doctest::Approx(yd.value().item()).epsilon(1e-5));
}
