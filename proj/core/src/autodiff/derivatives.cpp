#include "mpipn/autodiff/derivatives.hpp"

#include <cmath>
#include <string>

#include "mpipn/error.hpp"

namespace mpipn::ad {

namespace {

double discrepancy(double ad, double fd) {
  return std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1.0});
}

Tensor run_pointwise(const PointwiseComputation& f, const Tensor& points) {
  Tape tape;
  return f(tape, tape.leaf(points)).value();
}

// Fixed weights in [0.5, 1.5) so the scalarized output mixes every entry.
Tensor probe_weights(std::size_t rows, std::size_t cols) {
  Tensor w({rows, cols});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 + std::fmod(0.6180339887498949 * static_cast<double>(i + 1), 1.0);
  return w;
}

}  // namespace

Tensor evaluate(const Computation& f, const std::vector<Tensor>& inputs,
                const std::vector<std::vector<std::size_t>>& signature) {
  if (!signature.empty()) {
    if (signature.size() != inputs.size()) {
      throw ShapeError("evaluate: expected " + std::to_string(signature.size()) + " inputs, got " +
                       std::to_string(inputs.size()));
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i].shape() != signature[i]) {
        throw ShapeError("evaluate: input " + std::to_string(i) + " has shape " + inputs[i].shape_string() +
                         ", expected " + shape_string(signature[i]));
      }
    }
  }
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  return f(tape, leaves).value();
}

std::vector<Tensor> gradient(const Computation& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
  const Var out = f(tape, leaves);
  tape.backward(out);
  std::vector<Tensor> grads;
  for (const auto& v : leaves) grads.push_back(tape.grad(v));
  return grads;
}

DirectionalJets directional_jets(const PointwiseComputation& f, const Tensor& points,
                                 std::span<const std::size_t> axes) {
  Tape tape;
  const int K = jet_blocks(static_cast<int>(axes.size()));
  const Var out = f(tape, tape.leaf(seed_jet(points, axes), false, K));
  if (out.blocks() != K) {
    throw ShapeError("directional_jets: output lost its jet blocks (" + std::to_string(out.blocks()) + " of " +
                     std::to_string(K) + ")");
  }
  const std::size_t R = out.rows(), C = out.cols();
  const Tensor& v = out.value();
  auto take = [&](int b) {
    const auto first = v.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(b) * R * C);
    return Tensor({R, C}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(R * C)));
  };
  DirectionalJets jets;
  jets.value = take(0);
  for (std::size_t a = 0; a < axes.size(); ++a) {
    jets.first.push_back(take(static_cast<int>(1 + 2 * a)));
    jets.second.push_back(take(static_cast<int>(2 + 2 * a)));
  }
  return jets;
}

Tensor second_directional(const PointwiseComputation& f, const Tensor& points, std::size_t axis) {
  const std::size_t axes[] = {axis};
  return directional_jets(f, points, axes).second.front();
}

FdReport fd_check(const PointwiseComputation& f, const Tensor& points, double step) {
  if (!(step > 0.0)) throw ConfigError("fd_check: step must be positive");
  FdReport report;
  const std::size_t N = points.rows(), d = points.cols();

  // Gradient of sum(w * f(X)) with respect to every coordinate.
  const Tensor base = run_pointwise(f, points);
  const Tensor w = probe_weights(base.rows(), base.cols());
  auto weighted = [&](const Tensor& x) {
    const Tensor y = run_pointwise(f, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };
  Tape tape;
  const Var x = tape.leaf(points, true);
  const Var y = f(tape, x);
  tape.backward(sum(mul(y, tape.leaf(w))));
  const Tensor g = tape.grad(x);
  for (std::size_t i = 0; i < points.size(); ++i) {
    Tensor plus = points, minus = points;
    plus[i] += step;
    minus[i] -= step;
    const double fd = (weighted(plus) - weighted(minus)) / (2.0 * step);
    report.gradient = std::max(report.gradient, discrepancy(g[i], fd));
  }

  std::vector<std::size_t> axes(d);
  for (std::size_t a = 0; a < d; ++a) axes[a] = a;
  const DirectionalJets jets = directional_jets(f, points, axes);
  for (std::size_t a = 0; a < d; ++a) {
    Tensor plus = points, minus = points;
    for (std::size_t r = 0; r < N; ++r) {
      plus(r, a) += step;
      minus(r, a) -= step;
    }
    const Tensor fp = run_pointwise(f, plus), fm = run_pointwise(f, minus);
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double first = (fp[i] - fm[i]) / (2.0 * step);
      const double second = (fp[i] - 2.0 * base[i] + fm[i]) / (step * step);
      report.first = std::max(report.first, discrepancy(jets.first[a][i], first));
      report.second = std::max(report.second, discrepancy(jets.second[a][i], second));
    }
  }
  return report;
}

}  // namespace mpipn::ad
