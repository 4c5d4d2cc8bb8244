#pragma once

#include <algorithm>
#include <functional>
#include <span>
#include <vector>

#include "mpipn/autodiff/ops.hpp"

namespace mpipn::ad {

/// A computation records itself on the given tape from leaf inputs.
using Computation = std::function<Var(Tape&, std::span<const Var>)>;

/// Maps an N x d point array to an N x C per-point output.
using PointwiseComputation = std::function<Var(Tape&, Var)>;

/// Forward value. A non-empty `signature` pins each input's shape.
Tensor evaluate(const Computation& f, const std::vector<Tensor>& inputs,
                const std::vector<std::vector<std::size_t>>& signature = {});

/// d f / d input for a 1x1 output, one reverse sweep.
std::vector<Tensor> gradient(const Computation& f, const std::vector<Tensor>& inputs);

struct DirectionalJets {
  Tensor value;
  std::vector<Tensor> first;   // one per axis, N x C
  std::vector<Tensor> second;  // one per axis, N x C
};

/// Value plus first and second derivatives along each coordinate axis, all in
/// one forward sweep. The seed moves that axis of every point together.
DirectionalJets directional_jets(const PointwiseComputation& f, const Tensor& points,
                                 std::span<const std::size_t> axes);

/// Second derivative of each output row along `axis`.
Tensor second_directional(const PointwiseComputation& f, const Tensor& points, std::size_t axis);

struct FdReport {
  double gradient = 0.0;
  double first = 0.0;
  double second = 0.0;
  double worst() const { return std::max(gradient, std::max(first, second)); }
};

/// Central-difference comparison of reverse gradients (of a fixed weighted sum
/// of outputs) and of first and second directional derivatives along every
/// input axis. Discrepancy per entry is |ad - fd| / max(|ad|, |fd|, 1).
FdReport fd_check(const PointwiseComputation& f, const Tensor& points, double step = 1e-4);

}  // namespace mpipn::ad
