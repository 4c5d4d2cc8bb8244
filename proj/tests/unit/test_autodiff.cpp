#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mpipn/autodiff/derivatives.hpp"
#include "mpipn/autodiff/taylor.hpp"
#include "mpipn/error.hpp"
#include "mpipn/rng.hpp"

using namespace mpipn;
using namespace mpipn::ad;

namespace {

Var first(Tape&, std::span<const Var> v) { return v[0]; }

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  Tensor t({r, c});
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

// Three Mish layers with constant weights, d -> 8 -> 8 -> 1.
PointwiseComputation random_mlp(std::uint64_t seed, std::size_t d) {
  Rng rng(seed);
  std::vector<Tensor> w, b;
  const std::size_t widths[] = {d, 8, 8, 1};
  for (int l = 0; l < 3; ++l) {
    w.push_back(random_tensor(rng, widths[l], widths[l + 1], -1.0, 1.0));
    b.push_back(random_tensor(rng, 1, widths[l + 1], -0.5, 0.5));
  }
  return [w, b](Tape& tape, Var x) {
    Var h = x;
    for (std::size_t l = 0; l < w.size(); ++l) {
      h = add(matmul(h, tape.leaf(w[l])), broadcast_rows(tape.leaf(b[l]), h.rows()));
      h = mish(h);
    }
    return h;
  };
}

}  // namespace

TEST_CASE("evaluate examples") {
  const Computation sq = [](Tape&, std::span<const Var> v) { return square(v[0]); };
  CHECK(evaluate(sq, {Tensor::scalar(3.0)}).item() == 9.0);
  const Computation m = [](Tape&, std::span<const Var> v) { return mish(v[0]); };
  CHECK(evaluate(m, {Tensor::scalar(0.0)}).item() == 0.0);
  const Computation plus = [](Tape&, std::span<const Var> v) { return v[0] + v[1]; };
  CHECK(evaluate(plus, {Tensor::scalar(1.0), Tensor::scalar(2.0)}).item() == 3.0);
}

TEST_CASE("evaluate reports shape mismatches with operation and shapes") {
  const Computation mm = [](Tape&, std::span<const Var> v) { return matmul(v[0], v[1]); };
  try {
    evaluate(mm, {Tensor::zeros(2, 3), Tensor::zeros(2, 3)});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("matmul") != std::string::npos);
    CHECK(what.find("1x2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(evaluate(first, {Tensor::zeros(2, 2)}, {{3, 2}}), ShapeError);
}

TEST_CASE("gradient examples") {
  const Computation sq = [](Tape&, std::span<const Var> v) { return square(v[0]); };
  CHECK(gradient(sq, {Tensor::scalar(3.0)})[0].item() == doctest::Approx(6.0).epsilon(1e-15));
  const Computation m = [](Tape&, std::span<const Var> v) { return mish(v[0]); };
  CHECK(gradient(m, {Tensor::scalar(0.0)})[0].item() == doctest::Approx(0.6).epsilon(1e-14));
  const Computation s = [](Tape&, std::span<const Var> v) { return sum(v[0]); };
  const auto g = gradient(s, {Tensor::from_rows({{1.5, -2.0, 7.0}})})[0];
  for (double v : g.data()) CHECK(v == 1.0);
}

TEST_CASE("gradient rejects non-scalar outputs and non-finite values") {
  CHECK_THROWS_AS(gradient(first, {Tensor::zeros(2, 1)}), ShapeError);
  const Computation bad = [](Tape&, std::span<const Var> v) { return sum(recip(v[0])); };
  try {
    gradient(bad, {Tensor::scalar(0.0)});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("node 1") != std::string::npos);
  }
}

TEST_CASE("second_directional examples") {
  const PointwiseComputation cube = [](Tape&, Var x) { return mul(x, square(x)); };
  CHECK(second_directional(cube, Tensor::scalar(2.0), 0).item() == doctest::Approx(12.0).epsilon(1e-14));
  const PointwiseComputation s = [](Tape&, Var x) { return sin(x); };
  CHECK(second_directional(s, Tensor::scalar(0.0), 0).item() == 0.0);
  // mish''(0) = 0.64; also frozen from a 40-digit evaluation at x = 1.
  const PointwiseComputation m = [](Tape&, Var x) { return mish(x); };
  CHECK(second_directional(m, Tensor::scalar(0.0), 0).item() == doctest::Approx(0.64).epsilon(1e-13));
  CHECK(second_directional(m, Tensor::scalar(1.0), 0).item() ==
        doctest::Approx(0.1846857644733282643).epsilon(1e-13));
  const auto fd = fd_check(m, Tensor::scalar(0.0));
  CHECK(fd.second < 1e-5);
}

TEST_CASE("abs is rejected on derivative tapes") {
  const PointwiseComputation f = [](Tape&, Var x) { return abs(x); };
  try {
    second_directional(f, Tensor::scalar(1.0), 0);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("abs") != std::string::npos);
  }
}

TEST_CASE("mish values") {
  CHECK(mish(0.0) == 0.0);
  CHECK(mish(50.0) == doctest::Approx(50.0));
  CHECK(mish(-20.0) == doctest::Approx(-4.122307240628761e-8).epsilon(1e-12));
  CHECK(std::isfinite(mish(800.0)));
  CHECK(std::isfinite(mish(-800.0)));
}

TEST_CASE("closed-form mish derivatives match the generic Taylor expansion") {
  for (double x = -25.0; x <= 25.0; x += 0.37) {
    const auto closed = mish_derivatives(x);
    const auto generic = mish(TaylorScalar<3>::variable(x));
    for (int k = 0; k < 4; ++k) {
      CHECK(closed[static_cast<std::size_t>(k)] == doctest::Approx(generic.derivative(k)).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("taylor scalars obey the chain rule") {
  // d^k/dx^k exp(sin x) at 0.3 against the closed forms.
  const double x = 0.3;
  const auto t = exp(sin(TaylorScalar<3>::variable(x)));
  const double s = std::sin(x), c = std::cos(x), e = std::exp(s);
  CHECK(t.derivative(1) == doctest::Approx(c * e).epsilon(1e-14));
  CHECK(t.derivative(2) == doctest::Approx((c * c - s) * e).epsilon(1e-14));
  CHECK(t.derivative(3) == doctest::Approx((c * c * c - 3 * s * c - c) * e).epsilon(1e-13));
  const DualValue d = DualValue::variable(2.0) * DualValue::variable(2.0);
  CHECK(d.c[1] == 4.0);
}

TEST_CASE("fd_check on polynomial and affine computations") {
  Rng rng(3);
  const Tensor pts = random_tensor(rng, 5, 2, -1.0, 1.0);
  const PointwiseComputation poly = [](Tape& tape, Var x) {
    const Var c = tape.leaf(Tensor::from_rows({{0.7}, {-1.3}}));
    const Var lin = matmul(x, c);
    return add(mul(lin, square(lin)), scale(lin, 2.0));
  };
  CHECK(fd_check(poly, pts).worst() < 1e-6);

  const PointwiseComputation aff = [](Tape& tape, Var x) {
    return affine(matmul(x, tape.leaf(Tensor::from_rows({{2.0}, {-3.0}}))), 1.5, 0.25);
  };
  for (std::size_t axis : {0u, 1u}) {
    const Tensor d2 = second_directional(aff, pts, axis);
    for (double v : d2.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("fd_check on random three-layer Mish networks") {
  Rng rng(11);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor pts = random_tensor(rng, 6, 2, -3.0, 3.0);
    CHECK(fd_check(random_mlp(s, 2), pts).worst() < 1e-5);
  }
}

TEST_CASE("smooth primitives agree with finite differences on [-3, 3]") {
  Rng rng(5);
  const Tensor pts = random_tensor(rng, 7, 1, -3.0, 3.0);
  const std::vector<PointwiseComputation> fs = {
      [](Tape&, Var x) { return mish(x); },      [](Tape&, Var x) { return tanh(x); },
      [](Tape&, Var x) { return exp(x); },       [](Tape&, Var x) { return sin(x); },
      [](Tape&, Var x) { return cos(x); },       [](Tape&, Var x) { return mul(sin(x), exp(x)); },
      [](Tape&, Var x) { return softplus(x); },  [](Tape&, Var x) { return div(x, exp(x)); },
      [](Tape&, Var x) { return log1p(square(x)); },
  };
  for (const auto& f : fs) CHECK(fd_check(f, pts).worst() < 1e-5);
}

TEST_CASE("gradient is linear in the computation") {
  Rng rng(8);
  const Tensor x = random_tensor(rng, 4, 3, -1.0, 1.0);
  const Computation f = [](Tape&, std::span<const Var> v) { return sum(tanh(v[0])); };
  const Computation g = [](Tape&, std::span<const Var> v) { return sum(mul(v[0], v[0])); };
  const double a = 0.75, b = -2.5;
  const Computation h = [&](Tape& t, std::span<const Var> v) { return add(scale(f(t, v), a), scale(g(t, v), b)); };
  const auto gf = gradient(f, {x})[0], gg = gradient(g, {x})[0], gh = gradient(h, {x})[0];
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(gh[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-15));
}

TEST_CASE("max-pool routes the gradient to one winner with lowest index on ties") {
  Tape tape;
  const Var x = tape.leaf(Tensor::from_rows({{1.0, 5.0}, {3.0, 2.0}, {3.0, 5.0}}), true);
  const Var m = max_pool_rows(x);
  CHECK(m.value() == Tensor::from_rows({{3.0, 5.0}}));
  tape.backward(sum(mul(m, tape.leaf(Tensor::from_rows({{2.0, -4.0}})))));
  CHECK(tape.grad(x) == Tensor::from_rows({{0.0, -4.0}, {2.0, 0.0}, {0.0, 0.0}}));
  const auto g = tape.grad(x);
  CHECK(std::accumulate(g.data().begin(), g.data().end(), 0.0) == -2.0);
}

TEST_CASE("replay reproduces recorded values bit for bit") {
  Rng rng(21);
  Tape tape;
  const Var x = tape.leaf(seed_jet(random_tensor(rng, 9, 2, -2.0, 2.0), std::vector<std::size_t>{0, 1}), false, 5);
  const Var y = mish(matmul(x, tape.leaf(random_tensor(rng, 2, 4, -1.0, 1.0))));
  const Var z = concat_cols(max_pool_rows(y), max_pool_rows(tanh(y)));
  const Tensor before_y = y.value(), before_z = z.value();
  tape.replay();
  CHECK(y.value() == before_y);
  CHECK(z.value() == before_z);
  tape.replay();
  CHECK(z.value() == before_z);
}

TEST_CASE("jets through a point-dependent transform match finite differences") {
  // x * (I + T(x)) with T max-pooled over the cloud, then a concatenated head.
  Rng rng(4);
  const Tensor pts = random_tensor(rng, 6, 2, -1.0, 1.0);
  const Tensor w = random_tensor(rng, 2, 4, -1.0, 1.0);
  const Tensor v = random_tensor(rng, 4, 1, -1.0, 1.0);
  const PointwiseComputation f = [w, v](Tape& tape, Var x) {
    const Var feat = tanh(matmul(x, tape.leaf(w)));
    const Var t = reshape_blocks(max_pool_rows(feat), 2, 2);
    const Var xt = matmul(x, add(t, tape.leaf(Tensor::identity(2))));
    const Var both = concat_cols(mish(xt), sub(xt, square(xt)));
    const Var u = tape.leaf(Tensor::from_rows({{0.4}, {-0.9}}));
    const Var denom = add(exp(matmul(gather_rows(xt, {5, 4, 3, 2, 1, 0}), u)), tape.leaf(Tensor::filled(6, 1, 1.0)));
    return div(matmul(both, tape.leaf(v)), denom);
  };
  CHECK(fd_check(f, pts).worst() < 1e-5);
}
