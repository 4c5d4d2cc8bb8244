#include "mpipn/optimizer.hpp"

#include <cmath>

#include "mpipn/error.hpp"

namespace mpipn::training {

void RAdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("optimizer: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("optimizer: eps must be positive");
}

void OptimizerConfig::validate() const {
  radam.validate();
  if (lookahead_k < 1) throw ConfigError("optimizer: lookahead k must be at least 1");
  if (!(lookahead_alpha >= 0.0 && lookahead_alpha <= 1.0)) {
    throw ConfigError("optimizer: lookahead alpha must lie in [0, 1]");
  }
}

void radam_step(std::span<const ParamRef> params, RAdamState& state, const RAdamConfig& config) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor::zeros(p.value->rows(), p.value->cols()));
      state.v.push_back(Tensor::zeros(p.value->rows(), p.value->cols()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("radam_step: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad->rows() != p.value->rows() || p.grad->cols() != p.value->cols() ||
        state.m[i].rows() != p.value->rows() || state.m[i].cols() != p.value->cols()) {
      throw ShapeError("radam_step: shape mismatch for " + p.name);
    }
    for (double g : p.grad->data()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter tensor " + p.name);
    }
  }

  const double t = static_cast<double>(++state.step);
  const double b1t = std::pow(config.beta1, t);
  const double b2t = std::pow(config.beta2, t);
  const double rho_inf = 2.0 / (1.0 - config.beta2) - 1.0;
  const double rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t);
  const bool adaptive = rho_t > 4.0;
  const double rect =
      adaptive ? std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
               : 0.0;
  const double m_corr = 1.0 / (1.0 - b1t);
  const double v_corr = std::sqrt(1.0 - b2t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].value->data();
    const auto g = params[i].grad->data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] * m_corr;
      if (adaptive) {
        w[j] -= config.lr * rect * m_hat * v_corr / (std::sqrt(v[j]) + config.eps);
      } else {
        w[j] -= config.lr * m_hat;
      }
    }
  }
}

void lookahead_step(std::span<Tensor* const> fast, LookAheadState& state, std::uint64_t k, double alpha) {
  if (k < 1) throw ConfigError("lookahead: k must be at least 1");
  if (state.slow.empty()) {
    // Unseeded state: the weights after this first inner step become the slow copy.
    for (const Tensor* f : fast) state.slow.push_back(*f);
  }
  if (state.slow.size() != fast.size()) throw ShapeError("lookahead_step: state does not match parameter list");
  if (++state.inner % k != 0) return;
  for (std::size_t i = 0; i < fast.size(); ++i) {
    auto s = state.slow[i].data();
    auto f = fast[i]->data();
    for (std::size_t j = 0; j < s.size(); ++j) {
      s[j] = (1.0 - alpha) * s[j] + alpha * f[j];
      f[j] = s[j];
    }
  }
}

Optimizer::Optimizer(const net::ModelParams& model, OptimizerConfig config) : config_(std::move(config)) {
  config_.validate();
  for (std::size_t i = 0; i < model.tensors.size(); ++i) {
    if (model.tensors[i].trainable) trainable_.push_back(i);
  }
  if (config_.lookahead) {
    for (std::size_t i : trainable_) lookahead_.slow.push_back(model.tensors[i].value);
  }
}

void Optimizer::step(net::ModelParams& model, const std::vector<Tensor>& grads) {
  if (grads.size() != model.tensors.size()) throw ShapeError("optimizer: gradient list does not match model");
  std::vector<ParamRef> refs;
  std::vector<Tensor*> fast;
  refs.reserve(trainable_.size());
  for (std::size_t i : trainable_) {
    refs.push_back({model.tensors[i].name, &model.tensors[i].value, &grads[i]});
    fast.push_back(&model.tensors[i].value);
  }
  radam_step(refs, radam_, config_.radam);
  if (config_.lookahead) lookahead_step(fast, lookahead_, config_.lookahead_k, config_.lookahead_alpha);
}

}  // namespace mpipn::training
