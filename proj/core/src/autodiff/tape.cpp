#include "mpipn/autodiff/tape.hpp"

#include <Eigen/Core>
#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif
#include <algorithm>
#include <cmath>
#include <string>

#include "mpipn/autodiff/ops.hpp"
#include "mpipn/autodiff/taylor.hpp"
#include "mpipn/error.hpp"

namespace mpipn::ad {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using CMapM = Eigen::Map<const Mat>;

// Block b of a stacked jet value (rows x cols per block).
MapM blk(Tensor& t, int b, std::size_t rows, std::size_t cols) {
  return MapM(t.ptr() + static_cast<std::size_t>(b) * rows * cols, static_cast<Eigen::Index>(rows),
              static_cast<Eigen::Index>(cols));
}
CMapM blk(const Tensor& t, int b, std::size_t rows, std::size_t cols) {
  return CMapM(t.ptr() + static_cast<std::size_t>(b) * rows * cols, static_cast<Eigen::Index>(rows),
               static_cast<Eigen::Index>(cols));
}

// Pointer to block b, or nullptr when the operand carries no such block (zero tangent).
const double* block_ptr(const Tensor& t, int blocks, int b, std::size_t per_block) {
  return b < blocks ? t.ptr() + static_cast<std::size_t>(b) * per_block : nullptr;
}
double* block_ptr(Tensor& t, int blocks, int b, std::size_t per_block) {
  return b < blocks ? t.ptr() + static_cast<std::size_t>(b) * per_block : nullptr;
}

// O (+)= s * A * B with A: R x M, B: M x C, all row-major. Every output entry
// is one fma chain over k = 0..M-1 in order, whichever path computes it, so a
// row's result depends only on its own input row (bitwise permutation
// equivariance, which blocked GEMM does not give). fma rounds once, so the
// vector tiles and the scalar edges agree bit for bit.
void product_entry(const double* A, const double* B, double* O, std::size_t i, std::size_t j, std::size_t M,
                   std::size_t C, double s, bool accumulate) {
  double v = accumulate ? O[i * C + j] : 0.0;
  for (std::size_t k = 0; k < M; ++k) v = std::fma(s * A[i * M + k], B[k * C + j], v);
  O[i * C + j] = v;
}

void rowwise_product(const double* A, const double* B, double* O, std::size_t R, std::size_t M, std::size_t C,
                     double s, bool accumulate) {
  std::size_t i = 0;
#if defined(__AVX2__) && defined(__FMA__)
  const __m256d vs = _mm256_set1_pd(s);
  for (; i + 4 <= R; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= C; j += 8) {
      __m256d acc[4][2];
      for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t h = 0; h < 2; ++h) {
          acc[r][h] = accumulate ? _mm256_loadu_pd(O + (i + r) * C + j + 4 * h) : _mm256_setzero_pd();
        }
      }
      const double* a = A + i * M;
      for (std::size_t k = 0; k < M; ++k) {
        const __m256d b0 = _mm256_loadu_pd(B + k * C + j), b1 = _mm256_loadu_pd(B + k * C + j + 4);
        for (std::size_t r = 0; r < 4; ++r) {
          const __m256d ar = _mm256_mul_pd(vs, _mm256_broadcast_sd(a + r * M + k));
          acc[r][0] = _mm256_fmadd_pd(ar, b0, acc[r][0]);
          acc[r][1] = _mm256_fmadd_pd(ar, b1, acc[r][1]);
        }
      }
      for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t h = 0; h < 2; ++h) _mm256_storeu_pd(O + (i + r) * C + j + 4 * h, acc[r][h]);
      }
    }
    for (; j < C; ++j) {
      for (std::size_t r = 0; r < 4; ++r) product_entry(A, B, O, i + r, j, M, C, s, accumulate);
    }
  }
#endif
  for (; i < R; ++i) {
    double* __restrict o = O + i * C;
    if (!accumulate) std::fill(o, o + C, 0.0);
    for (std::size_t k = 0; k < M; ++k) {
      const double a = s * A[i * M + k];
      const double* __restrict b = B + k * C;
      for (std::size_t j = 0; j < C; ++j) o[j] = std::fma(a, b[j], o[j]);
    }
  }
}

template <int O>
TaylorScalar<O> apply(UnaryFn fn, const TaylorScalar<O>& x) {
  switch (fn) {
    case UnaryFn::Exp: return exp(x);
    case UnaryFn::Log1p: return log1p(x);
    case UnaryFn::Tanh: return tanh(x);
    case UnaryFn::Sin: return sin(x);
    case UnaryFn::Cos: return cos(x);
    case UnaryFn::Mish: return mish(x);
    case UnaryFn::Softplus: return softplus(x);
    case UnaryFn::Square: return x * x;
    case UnaryFn::Recip: return recip(x);
    case UnaryFn::Abs: return abs(x);
  }
  return x;
}

}  // namespace

std::array<double, 4> unary_derivatives(UnaryFn fn, double x) {
  const auto t = apply(fn, TaylorScalar<3>::variable(x));
  return {t.derivative(0), t.derivative(1), t.derivative(2), t.derivative(3)};
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::MatMul: return "matmul";
    case OpKind::Unary: return "unary";
    case OpKind::Affine: return "affine";
    case OpKind::MaxPoolRows: return "max_pool_rows";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::BroadcastRows: return "broadcast_rows";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::SumAll: return "sum";
    case OpKind::Block: return "block";
    case OpKind::ReshapeBlocks: return "reshape_blocks";
  }
  return "?";
}

std::string_view unary_name(UnaryFn fn) {
  switch (fn) {
    case UnaryFn::Exp: return "exp";
    case UnaryFn::Log1p: return "log1p";
    case UnaryFn::Tanh: return "tanh";
    case UnaryFn::Sin: return "sin";
    case UnaryFn::Cos: return "cos";
    case UnaryFn::Mish: return "mish";
    case UnaryFn::Softplus: return "softplus";
    case UnaryFn::Square: return "square";
    case UnaryFn::Recip: return "recip";
    case UnaryFn::Abs: return "abs";
  }
  return "?";
}

const Tensor& Var::value() const { return tape->value(*this); }
int Var::blocks() const { return tape->node(id).blocks; }
std::size_t Var::rows() const { return tape->node(id).rows; }
std::size_t Var::cols() const { return tape->node(id).cols; }

Var Tape::leaf(Tensor value, bool requires_grad, int blocks) {
  if (value.rank() != 2) throw ShapeError("leaf: expected rank-2 value, got " + value.shape_string());
  if (blocks < 1 || value.rows() % static_cast<std::size_t>(blocks) != 0) {
    throw ShapeError("leaf: " + std::to_string(blocks) + " blocks do not divide " + value.shape_string());
  }
  Node n;
  n.kind = OpKind::Leaf;
  n.blocks = blocks;
  n.rows = value.rows() / static_cast<std::size_t>(blocks);
  n.cols = value.cols();
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  check_finite(nodes_.size() - 1);
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Node node) {
  node.requires_grad = (node.lhs >= 0 && nodes_[static_cast<std::size_t>(node.lhs)].requires_grad) ||
                       (node.rhs >= 0 && nodes_[static_cast<std::size_t>(node.rhs)].requires_grad);
  if (node.kind == OpKind::ConcatCols) {
    for (auto id : node.index) node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  }
  compute(node);
  nodes_.push_back(std::move(node));
  check_finite(nodes_.size() - 1);
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::set_leaf(Var leaf, Tensor value) {
  auto& n = nodes_.at(static_cast<std::size_t>(leaf.id));
  if (n.kind != OpKind::Leaf) throw Error("set_leaf: node " + std::to_string(leaf.id) + " is not a leaf");
  if (value.shape() != n.value.shape()) {
    throw ShapeError("set_leaf: shape " + value.shape_string() + " differs from " + n.value.shape_string());
  }
  n.value = std::move(value);
}

void Tape::replay() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::Leaf) continue;
    compute(nodes_[i]);
    check_finite(i);
  }
}

void Tape::check_finite(std::size_t id) const {
  if (!check_finite_) return;
  const auto& n = nodes_[id];
  for (double v : n.value.data()) {
    if (!std::isfinite(v)) {
      std::string what = std::string(op_name(n.kind));
      if (n.kind == OpKind::Unary) what += ":" + std::string(unary_name(n.fn));
      throw NumericError("non-finite value produced at tape node " + std::to_string(id) + " (" + what + ")");
    }
  }
}

void Tape::compute(Node& n) const {
  if (n.kind == OpKind::Leaf) return;
  const std::size_t R = n.rows, C = n.cols, per = R * C;
  const int K = n.blocks;
  n.value = Tensor({static_cast<std::size_t>(K) * R, C});
  Tensor& out = n.value;
  const Node* a = n.lhs >= 0 ? &nodes_[static_cast<std::size_t>(n.lhs)] : nullptr;
  const Node* b = n.rhs >= 0 ? &nodes_[static_cast<std::size_t>(n.rhs)] : nullptr;

  switch (n.kind) {
    case OpKind::Leaf:
      break;

    case OpKind::Add:
    case OpKind::Sub: {
      const double sign = n.kind == OpKind::Sub ? -1.0 : 1.0;
      for (int k = 0; k < K; ++k) {
        double* o = out.ptr() + static_cast<std::size_t>(k) * per;
        const double* pa = block_ptr(a->value, a->blocks, k, per);
        const double* pb = block_ptr(b->value, b->blocks, k, per);
        for (std::size_t e = 0; e < per; ++e) o[e] = (pa ? pa[e] : 0.0) + sign * (pb ? pb[e] : 0.0);
      }
      break;
    }

    case OpKind::Mul: {
      const double* av = a->value.ptr();
      const double* bv = b->value.ptr();
      double* ov = out.ptr();
      for (std::size_t e = 0; e < per; ++e) ov[e] = av[e] * bv[e];
      for (int ax = 0; ax < jet_axes(K); ++ax) {
        const int kd = 1 + 2 * ax, ks = kd + 1;
        const double* ad = block_ptr(a->value, a->blocks, kd, per);
        const double* as = block_ptr(a->value, a->blocks, ks, per);
        const double* bd = block_ptr(b->value, b->blocks, kd, per);
        const double* bs = block_ptr(b->value, b->blocks, ks, per);
        double* od = out.ptr() + static_cast<std::size_t>(kd) * per;
        double* os = out.ptr() + static_cast<std::size_t>(ks) * per;
        for (std::size_t e = 0; e < per; ++e) {
          const double add = ad ? ad[e] : 0.0, ass = as ? as[e] : 0.0;
          const double bdd = bd ? bd[e] : 0.0, bss = bs ? bs[e] : 0.0;
          od[e] = add * bv[e] + av[e] * bdd;
          os[e] = ass * bv[e] + 2.0 * add * bdd + av[e] * bss;
        }
      }
      break;
    }

    case OpKind::MatMul: {
      const std::size_t M = a->cols;
      if (b->blocks == 1) {
        // Weight-like right operand: every block of the stacked left jet maps linearly.
        rowwise_product(a->value.ptr(), b->value.ptr(), out.ptr(), a->value.rows(), M, C, 1.0, false);
        break;
      }
      const double* av = a->value.ptr();
      const std::size_t pa = R * M, pb = M * C, po = R * C;
      rowwise_product(av, b->value.ptr(), out.ptr(), R, M, C, 1.0, false);
      for (int ax = 0; ax < jet_axes(K); ++ax) {
        const std::size_t kd = 1 + 2 * static_cast<std::size_t>(ax), ks = kd + 1;
        double* od = out.ptr() + kd * po;
        double* os = out.ptr() + ks * po;
        const double* bv = b->value.ptr();
        const double* bd = bv + kd * pb;
        const double* bs = bv + ks * pb;
        rowwise_product(av, bd, od, R, M, C, 1.0, false);
        rowwise_product(av, bs, os, R, M, C, 1.0, false);
        if (a->blocks > 1) {
          const double* ad = av + kd * pa;
          const double* as = av + ks * pa;
          rowwise_product(ad, bv, od, R, M, C, 1.0, true);
          rowwise_product(as, bv, os, R, M, C, 1.0, true);
          rowwise_product(ad, bd, os, R, M, C, 2.0, true);
        }
      }
      break;
    }

    case OpKind::Unary: {
      const double* x = a->value.ptr();
      double* ov = out.ptr();
      if (n.fn == UnaryFn::Mish) {
        n.cache.resize(K == 1 ? per : 3 * per);
        for (std::size_t e = 0; e < per; ++e) {
          const auto d = mish_derivatives(x[e]);
          ov[e] = d[0];
          n.cache[e] = d[1];
          if (K > 1) {
            n.cache[per + e] = d[2];
            n.cache[2 * per + e] = d[3];
          }
        }
      } else if (K == 1) {
        n.cache.resize(per);
        for (std::size_t e = 0; e < per; ++e) {
          const auto t = apply(n.fn, TaylorScalar<1>::variable(x[e]));
          ov[e] = t.c[0];
          n.cache[e] = t.c[1];
        }
      } else {
        n.cache.resize(3 * per);
        for (std::size_t e = 0; e < per; ++e) {
          const auto t = apply(n.fn, TaylorScalar<3>::variable(x[e]));
          ov[e] = t.c[0];
          n.cache[e] = t.c[1];
          n.cache[per + e] = 2.0 * t.c[2];
          n.cache[2 * per + e] = 6.0 * t.c[3];
        }
      }
      if (K == 1) break;
      const double* f1 = n.cache.data();
      const double* f2 = f1 + per;
      for (int ax = 0; ax < jet_axes(K); ++ax) {
        const int kd = 1 + 2 * ax, ks = kd + 1;
        const double* xd = a->value.ptr() + static_cast<std::size_t>(kd) * per;
        const double* xs = a->value.ptr() + static_cast<std::size_t>(ks) * per;
        double* od = out.ptr() + static_cast<std::size_t>(kd) * per;
        double* os = out.ptr() + static_cast<std::size_t>(ks) * per;
        for (std::size_t e = 0; e < per; ++e) {
          od[e] = f1[e] * xd[e];
          os[e] = f1[e] * xs[e] + f2[e] * xd[e] * xd[e];
        }
      }
      break;
    }

    case OpKind::Affine: {
      const double* x = a->value.ptr();
      double* o = out.ptr();
      const std::size_t total = out.size();
      for (std::size_t e = 0; e < total; ++e) o[e] = n.alpha * x[e];
      for (std::size_t e = 0; e < per; ++e) o[e] += n.beta;
      break;
    }

    case OpKind::MaxPoolRows: {
      const std::size_t in_rows = a->rows;
      const double* x = a->value.ptr();
      n.index.assign(C, 0);
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < in_rows; ++r) {
          if (x[r * C + c] > x[best * C + c]) best = r;
        }
        n.index[c] = best;
      }
      for (int k = 0; k < K; ++k) {
        const double* xb = x + static_cast<std::size_t>(k) * in_rows * C;
        double* o = out.ptr() + static_cast<std::size_t>(k) * C;
        for (std::size_t c = 0; c < C; ++c) o[c] = xb[n.index[c] * C + c];
      }
      break;
    }

    case OpKind::ConcatCols: {
      std::size_t offset = 0;
      for (auto id : n.index) {
        const Node& p = nodes_[id];
        for (int k = 0; k < std::min(K, p.blocks); ++k) {
          blk(out, k, R, C).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(p.cols)) =
              blk(p.value, k, R, p.cols);
        }
        offset += p.cols;
      }
      break;
    }

    case OpKind::BroadcastRows: {
      for (int k = 0; k < K; ++k) {
        const double* src = a->value.ptr() + static_cast<std::size_t>(k) * C;
        double* o = out.ptr() + static_cast<std::size_t>(k) * per;
        for (std::size_t r = 0; r < R; ++r) std::copy(src, src + C, o + r * C);
      }
      break;
    }

    case OpKind::GatherRows: {
      const std::size_t in_per = a->rows * C;
      for (int k = 0; k < K; ++k) {
        const double* src = a->value.ptr() + static_cast<std::size_t>(k) * in_per;
        double* o = out.ptr() + static_cast<std::size_t>(k) * per;
        for (std::size_t r = 0; r < R; ++r) std::copy(src + n.index[r] * C, src + (n.index[r] + 1) * C, o + r * C);
      }
      break;
    }

    case OpKind::SumAll: {
      double s = 0.0;
      for (double v : a->value.data()) s += v;
      out[0] = s;
      break;
    }

    case OpKind::Block: {
      const double* src = a->value.ptr() + n.arg * per;
      std::copy(src, src + per, out.ptr());
      break;
    }

    case OpKind::ReshapeBlocks: {
      std::copy(a->value.data().begin(), a->value.data().end(), out.ptr());
      break;
    }
  }
}

Tensor& Tape::grad_slot(int id) {
  auto& g = grads_[static_cast<std::size_t>(id)];
  if (g.empty()) g = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape());
  return g;
}

void Tape::backward(Var output) {
  if (output.tape != this) throw Error("backward: variable belongs to another tape");
  const Node& out = node(output.id);
  if (out.blocks != 1 || out.value.size() != 1) {
    throw ShapeError("backward: output must be a primal scalar, got " + out.value.shape_string() + " with " +
                     std::to_string(out.blocks) + " blocks");
  }
  grads_.resize(nodes_.size());
  grad_slot(output.id)[0] += 1.0;
  for (std::size_t i = static_cast<std::size_t>(output.id) + 1; i-- > 0;) {
    if (!nodes_[i].requires_grad || grads_[i].empty() || nodes_[i].kind == OpKind::Leaf) continue;
    propagate(i);
  }
}

void Tape::zero_grad() { grads_.clear(); }

Tensor Tape::grad(Var v) const {
  const auto id = static_cast<std::size_t>(v.id);
  if (id < grads_.size() && !grads_[id].empty()) return grads_[id];
  return Tensor(node(v.id).value.shape());
}

void Tape::propagate(std::size_t id) {
  const Node& n = nodes_[id];
  const Tensor& g = grads_[id];
  const std::size_t R = n.rows, C = n.cols, per = R * C;
  const int K = n.blocks;
  const bool ga_on = n.lhs >= 0 && nodes_[static_cast<std::size_t>(n.lhs)].requires_grad;
  const bool gb_on = n.rhs >= 0 && nodes_[static_cast<std::size_t>(n.rhs)].requires_grad;
  const Node* a = n.lhs >= 0 ? &nodes_[static_cast<std::size_t>(n.lhs)] : nullptr;
  const Node* b = n.rhs >= 0 ? &nodes_[static_cast<std::size_t>(n.rhs)] : nullptr;

  switch (n.kind) {
    case OpKind::Leaf:
      break;

    case OpKind::Add:
    case OpKind::Sub: {
      const double sign = n.kind == OpKind::Sub ? -1.0 : 1.0;
      if (ga_on) {
        Tensor& ga = grad_slot(n.lhs);
        for (std::size_t e = 0; e < ga.size(); ++e) ga[e] += g[e];
      }
      if (gb_on) {
        Tensor& gb = grad_slot(n.rhs);
        for (std::size_t e = 0; e < gb.size(); ++e) gb[e] += sign * g[e];
      }
      break;
    }

    case OpKind::Mul: {
      const Node* sides[2] = {a, b};
      const bool on[2] = {ga_on, gb_on};
      for (int s = 0; s < 2; ++s) {
        if (!on[s]) continue;
        const Node* self = sides[s];
        const Node* other = sides[1 - s];
        Tensor& gs = grad_slot(s == 0 ? n.lhs : n.rhs);
        const double* ov = other->value.ptr();
        double* gv = gs.ptr();
        const double* gov = g.ptr();
        for (std::size_t e = 0; e < per; ++e) gv[e] += gov[e] * ov[e];
        for (int ax = 0; ax < jet_axes(K); ++ax) {
          const int kd = 1 + 2 * ax, kss = kd + 1;
          const double* god = g.ptr() + static_cast<std::size_t>(kd) * per;
          const double* gos = g.ptr() + static_cast<std::size_t>(kss) * per;
          const double* od = block_ptr(other->value, other->blocks, kd, per);
          const double* os = block_ptr(other->value, other->blocks, kss, per);
          if (od) {
            for (std::size_t e = 0; e < per; ++e) gv[e] += god[e] * od[e] + gos[e] * os[e];
          }
          double* gd = block_ptr(gs, self->blocks, kd, per);
          double* gss = block_ptr(gs, self->blocks, kss, per);
          if (gd) {
            for (std::size_t e = 0; e < per; ++e) {
              gd[e] += god[e] * ov[e] + (od ? 2.0 * gos[e] * od[e] : 0.0);
              gss[e] += gos[e] * ov[e];
            }
          }
        }
      }
      break;
    }

    case OpKind::MatMul: {
      const std::size_t M = a->cols;
      if (b->blocks == 1) {
        const auto rows_a = static_cast<Eigen::Index>(a->value.rows());
        CMapM G(g.ptr(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(C));
        CMapM B(b->value.ptr(), static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(C));
        CMapM A(a->value.ptr(), rows_a, static_cast<Eigen::Index>(M));
        const auto Gtop = G.topRows(rows_a);
        if (ga_on) {
          Tensor& ga = grad_slot(n.lhs);
          MapM(ga.ptr(), rows_a, static_cast<Eigen::Index>(M)).noalias() += Gtop * B.transpose();
        }
        if (gb_on) {
          Tensor& gb = grad_slot(n.rhs);
          MapM(gb.ptr(), static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(C)).noalias() +=
              A.transpose() * Gtop;
        }
        break;
      }
      const auto Av = blk(a->value, 0, R, M);
      const auto Bv = blk(b->value, 0, M, C);
      const auto Gv = blk(g, 0, R, C);
      if (ga_on) {
        Tensor& ga = grad_slot(n.lhs);
        auto gAv = blk(ga, 0, R, M);
        gAv.noalias() += Gv * Bv.transpose();
        for (int ax = 0; ax < jet_axes(K); ++ax) {
          const int kd = 1 + 2 * ax, ks = kd + 1;
          const auto Gd = blk(g, kd, R, C);
          const auto Gs = blk(g, ks, R, C);
          const auto Bd = blk(b->value, kd, M, C);
          const auto Bs = blk(b->value, ks, M, C);
          gAv.noalias() += Gd * Bd.transpose();
          gAv.noalias() += Gs * Bs.transpose();
          if (a->blocks > 1) {
            auto gAd = blk(ga, kd, R, M);
            gAd.noalias() += Gd * Bv.transpose();
            gAd.noalias() += 2.0 * (Gs * Bd.transpose());
            blk(ga, ks, R, M).noalias() += Gs * Bv.transpose();
          }
        }
      }
      if (gb_on) {
        Tensor& gb = grad_slot(n.rhs);
        blk(gb, 0, M, C).noalias() += Av.transpose() * Gv;
        for (int ax = 0; ax < jet_axes(K); ++ax) {
          const int kd = 1 + 2 * ax, ks = kd + 1;
          const auto Gd = blk(g, kd, R, C);
          const auto Gs = blk(g, ks, R, C);
          auto gBd = blk(gb, kd, M, C);
          gBd.noalias() += Av.transpose() * Gd;
          blk(gb, ks, M, C).noalias() += Av.transpose() * Gs;
          if (a->blocks > 1) {
            const auto Ad = blk(a->value, kd, R, M);
            const auto As = blk(a->value, ks, R, M);
            auto gBv = blk(gb, 0, M, C);
            gBv.noalias() += Ad.transpose() * Gd;
            gBv.noalias() += As.transpose() * Gs;
            gBd.noalias() += 2.0 * (Ad.transpose() * Gs);
          }
        }
      }
      break;
    }

    case OpKind::Unary: {
      if (!ga_on) break;
      Tensor& ga = grad_slot(n.lhs);
      const double* f1 = n.cache.data();
      double* gv = ga.ptr();
      const double* gov = g.ptr();
      for (std::size_t e = 0; e < per; ++e) gv[e] += gov[e] * f1[e];
      if (K == 1) break;
      const double* f2 = f1 + per;
      const double* f3 = f2 + per;
      for (int ax = 0; ax < jet_axes(K); ++ax) {
        const int kd = 1 + 2 * ax, ks = kd + 1;
        const double* xd = a->value.ptr() + static_cast<std::size_t>(kd) * per;
        const double* xs = a->value.ptr() + static_cast<std::size_t>(ks) * per;
        const double* god = g.ptr() + static_cast<std::size_t>(kd) * per;
        const double* gos = g.ptr() + static_cast<std::size_t>(ks) * per;
        double* gd = ga.ptr() + static_cast<std::size_t>(kd) * per;
        double* gs = ga.ptr() + static_cast<std::size_t>(ks) * per;
        for (std::size_t e = 0; e < per; ++e) {
          gv[e] += god[e] * f2[e] * xd[e] + gos[e] * (f2[e] * xs[e] + f3[e] * xd[e] * xd[e]);
          gd[e] += god[e] * f1[e] + 2.0 * gos[e] * f2[e] * xd[e];
          gs[e] += gos[e] * f1[e];
        }
      }
      break;
    }

    case OpKind::Affine: {
      if (!ga_on) break;
      Tensor& ga = grad_slot(n.lhs);
      for (std::size_t e = 0; e < ga.size(); ++e) ga[e] += n.alpha * g[e];
      break;
    }

    case OpKind::MaxPoolRows: {
      if (!ga_on) break;
      Tensor& ga = grad_slot(n.lhs);
      const std::size_t in_per = a->rows * C;
      for (int k = 0; k < K; ++k) {
        double* dst = ga.ptr() + static_cast<std::size_t>(k) * in_per;
        const double* src = g.ptr() + static_cast<std::size_t>(k) * C;
        for (std::size_t c = 0; c < C; ++c) dst[n.index[c] * C + c] += src[c];
      }
      break;
    }

    case OpKind::ConcatCols: {
      std::size_t offset = 0;
      for (auto pid : n.index) {
        const Node& p = nodes_[pid];
        if (p.requires_grad) {
          Tensor& gp = grad_slot(static_cast<int>(pid));
          for (int k = 0; k < p.blocks; ++k) {
            blk(gp, k, R, p.cols) +=
                blk(g, k, R, C).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(p.cols));
          }
        }
        offset += p.cols;
      }
      break;
    }

    case OpKind::BroadcastRows: {
      if (!ga_on) break;
      Tensor& ga = grad_slot(n.lhs);
      for (int k = 0; k < K; ++k) {
        double* dst = ga.ptr() + static_cast<std::size_t>(k) * C;
        const double* src = g.ptr() + static_cast<std::size_t>(k) * per;
        for (std::size_t r = 0; r < R; ++r) {
          for (std::size_t c = 0; c < C; ++c) dst[c] += src[r * C + c];
        }
      }
      break;
    }

    case OpKind::GatherRows: {
      if (!ga_on) break;
      Tensor& ga = grad_slot(n.lhs);
      const std::size_t in_per = a->rows * C;
      for (int k = 0; k < K; ++k) {
        double* dst = ga.ptr() + static_cast<std::size_t>(k) * in_per;
        const double* src = g.ptr() + static_cast<std::size_t>(k) * per;
        for (std::size_t r = 0; r < R; ++r) {
          for (std::size_t c = 0; c < C; ++c) dst[n.index[r] * C + c] += src[r * C + c];
        }
      }
      break;
    }

    case OpKind::SumAll: {
      if (!ga_on) break;
      Tensor& ga = grad_slot(n.lhs);
      const double s = g[0];
      for (std::size_t e = 0; e < ga.size(); ++e) ga[e] += s;
      break;
    }

    case OpKind::Block: {
      if (!ga_on) break;
      Tensor& ga = grad_slot(n.lhs);
      double* dst = ga.ptr() + n.arg * per;
      for (std::size_t e = 0; e < per; ++e) dst[e] += g[e];
      break;
    }

    case OpKind::ReshapeBlocks: {
      if (!ga_on) break;
      Tensor& ga = grad_slot(n.lhs);
      for (std::size_t e = 0; e < ga.size(); ++e) ga[e] += g[e];
      break;
    }
  }
}

}  // namespace mpipn::ad
