#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mpipn/autodiff/tape.hpp"

namespace mpipn::ad {

// Binary ops accept operands with equal block counts, or one operand with a
// single block, which then behaves as a constant (zero tangents).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);   // elementwise
Var div(Var a, Var b);   // elementwise, a * recip(b)
Var matmul(Var a, Var b);

Var unary(UnaryFn fn, Var x);
inline Var exp(Var x) { return unary(UnaryFn::Exp, x); }
inline Var log1p(Var x) { return unary(UnaryFn::Log1p, x); }
inline Var tanh(Var x) { return unary(UnaryFn::Tanh, x); }
inline Var sin(Var x) { return unary(UnaryFn::Sin, x); }
inline Var cos(Var x) { return unary(UnaryFn::Cos, x); }
inline Var mish(Var x) { return unary(UnaryFn::Mish, x); }
inline Var softplus(Var x) { return unary(UnaryFn::Softplus, x); }
inline Var square(Var x) { return unary(UnaryFn::Square, x); }
inline Var recip(Var x) { return unary(UnaryFn::Recip, x); }
/// |x|; primal-only (no second-order rule).
inline Var abs(Var x) { return unary(UnaryFn::Abs, x); }

/// scale * x + shift; the shift applies to the primal block only.
Var affine(Var x, double scale, double shift = 0.0);
inline Var scale(Var x, double s) { return affine(x, s, 0.0); }
inline Var neg(Var x) { return affine(x, -1.0, 0.0); }

/// Column-wise maximum over rows (points). Ties go to the lowest row index.
/// Tangent blocks are taken from the winning row.
Var max_pool_rows(Var x);

Var concat_cols(std::span<const Var> parts);
inline Var concat_cols(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_cols(parts);
}

/// Repeats a single-row value `rows` times.
Var broadcast_rows(Var row, std::size_t rows);

Var gather_rows(Var x, std::vector<std::size_t> rows);
Var slice_rows(Var x, std::size_t begin, std::size_t end);

/// Sum of all elements of a single-block value, as 1x1.
Var sum(Var x);
Var mean(Var x);

/// One block of a jet as a plain (single-block) value.
Var block(Var x, int index);

/// Reinterprets each block (row-major) with a new per-block shape.
Var reshape_blocks(Var x, std::size_t rows, std::size_t cols);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator*(double s, Var x) { return scale(x, s); }
inline Var operator*(Var x, double s) { return scale(x, s); }
inline Var operator-(Var x) { return neg(x); }

/// Stacks a plain value into a jet seeded along coordinate columns `axes`:
/// block d_a holds 1 in column axes[a] of every row, s_a holds zeros.
Tensor seed_jet(const Tensor& x, std::span<const std::size_t> axes);

/// Elementwise function and derivatives f, f', f'', f''' at x.
std::array<double, 4> unary_derivatives(UnaryFn fn, double x);

}  // namespace mpipn::ad
