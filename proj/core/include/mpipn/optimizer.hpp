#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpipn/autodiff/tensor.hpp"
#include "mpipn/network.hpp"

namespace mpipn::training {

using ad::Tensor;

struct RAdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct RAdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

/// One parameter tensor and its gradient.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  const Tensor* grad = nullptr;
};

/// Rectified Adam. While the variance rectification term rho_t <= 4 the step
/// is plain bias-corrected momentum; afterwards the rectified adaptive step.
/// NumericError naming the tensor if a gradient is not finite.
void radam_step(std::span<const ParamRef> params, RAdamState& state, const RAdamConfig& config);

struct LookAheadState {
  std::vector<Tensor> slow;
  std::uint64_t inner = 0;
};

/// Called after each inner step. Every k-th call: slow <- (1 - a) slow + a fast, fast <- slow.
/// The first call captures the slow weights from the fast ones if none are held yet.
void lookahead_step(std::span<Tensor* const> fast, LookAheadState& state, std::uint64_t k, double alpha);

struct OptimizerConfig {
  RAdamConfig radam;
  bool lookahead = true;
  std::uint64_t lookahead_k = 5;
  double lookahead_alpha = 0.5;

  void validate() const;
};

/// RAdam wrapped in LookAhead over the trainable tensors of a model.
class Optimizer {
 public:
  Optimizer(const net::ModelParams& model, OptimizerConfig config);

  /// `grads` is aligned with model.tensors; non-trainable entries are ignored.
  void step(net::ModelParams& model, const std::vector<Tensor>& grads);

  void set_learning_rate(double lr) { config_.radam.lr = lr; }
  double learning_rate() const { return config_.radam.lr; }
  const RAdamState& radam_state() const { return radam_; }
  std::uint64_t steps() const { return radam_.step; }

 private:
  OptimizerConfig config_;
  std::vector<std::size_t> trainable_;
  RAdamState radam_;
  LookAheadState lookahead_;
};

}  // namespace mpipn::training
