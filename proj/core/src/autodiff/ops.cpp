#include "mpipn/autodiff/ops.hpp"

#include <string>

#include "mpipn/error.hpp"

namespace mpipn::ad {

namespace {

std::string describe(Var v) {
  return "[" + std::to_string(v.blocks()) + "x" + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + "]";
}

Tape* same_tape(std::string_view op, Var a, Var b) {
  if (!a.valid() || !b.valid()) throw Error(std::string(op) + ": invalid variable");
  if (a.tape != b.tape) throw Error(std::string(op) + ": operands live on different tapes");
  return a.tape;
}

int joint_blocks(std::string_view op, Var a, Var b) {
  const int ka = a.blocks(), kb = b.blocks();
  if (ka != kb && ka != 1 && kb != 1) {
    throw ShapeError(std::string(op) + ": incompatible jet blocks " + describe(a) + " and " + describe(b));
  }
  return std::max(ka, kb);
}

Var elementwise(OpKind kind, Var a, Var b) {
  const auto op = op_name(kind);
  Tape* tape = same_tape(op, a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + describe(a) + " vs " + describe(b));
  }
  Node n;
  n.kind = kind;
  n.lhs = a.id;
  n.rhs = b.id;
  n.blocks = joint_blocks(op, a, b);
  n.rows = a.rows();
  n.cols = a.cols();
  return tape->record(std::move(n));
}

}  // namespace

Var add(Var a, Var b) { return elementwise(OpKind::Add, a, b); }
Var sub(Var a, Var b) { return elementwise(OpKind::Sub, a, b); }
Var mul(Var a, Var b) { return elementwise(OpKind::Mul, a, b); }
Var div(Var a, Var b) { return mul(a, recip(b)); }

Var matmul(Var a, Var b) {
  Tape* tape = same_tape("matmul", a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + describe(a) + " vs " + describe(b));
  }
  Node n;
  n.kind = OpKind::MatMul;
  n.lhs = a.id;
  n.rhs = b.id;
  n.blocks = joint_blocks("matmul", a, b);
  n.rows = a.rows();
  n.cols = b.cols();
  return tape->record(std::move(n));
}

Var unary(UnaryFn fn, Var x) {
  if (!x.valid()) throw Error(std::string(unary_name(fn)) + ": invalid variable");
  if (fn == UnaryFn::Abs && x.blocks() > 1) {
    throw Error("unsupported primitive on derivative tape: abs has no second-order rule");
  }
  Node n;
  n.kind = OpKind::Unary;
  n.fn = fn;
  n.lhs = x.id;
  n.blocks = x.blocks();
  n.rows = x.rows();
  n.cols = x.cols();
  return x.tape->record(std::move(n));
}

Var affine(Var x, double scale, double shift) {
  if (!x.valid()) throw Error("affine: invalid variable");
  Node n;
  n.kind = OpKind::Affine;
  n.lhs = x.id;
  n.alpha = scale;
  n.beta = shift;
  n.blocks = x.blocks();
  n.rows = x.rows();
  n.cols = x.cols();
  return x.tape->record(std::move(n));
}

Var max_pool_rows(Var x) {
  if (!x.valid()) throw Error("max_pool_rows: invalid variable");
  Node n;
  n.kind = OpKind::MaxPoolRows;
  n.lhs = x.id;
  n.blocks = x.blocks();
  n.rows = 1;
  n.cols = x.cols();
  return x.tape->record(std::move(n));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Node n;
  n.kind = OpKind::ConcatCols;
  n.rows = parts[0].rows();
  n.blocks = 1;
  for (const Var& p : parts) {
    same_tape("concat_cols", parts[0], p);
    if (p.rows() != n.rows) {
      throw ShapeError("concat_cols: row mismatch " + describe(parts[0]) + " vs " + describe(p));
    }
    if (p.blocks() != 1 && n.blocks != 1 && p.blocks() != n.blocks) {
      throw ShapeError("concat_cols: incompatible jet blocks " + describe(p));
    }
    n.blocks = std::max(n.blocks, p.blocks());
    n.cols += p.cols();
    n.index.push_back(static_cast<std::size_t>(p.id));
  }
  return parts[0].tape->record(std::move(n));
}

Var broadcast_rows(Var row, std::size_t rows) {
  if (!row.valid()) throw Error("broadcast_rows: invalid variable");
  if (row.rows() != 1 || rows == 0) {
    throw ShapeError("broadcast_rows: need a single row and rows > 0, got " + describe(row));
  }
  Node n;
  n.kind = OpKind::BroadcastRows;
  n.lhs = row.id;
  n.blocks = row.blocks();
  n.rows = rows;
  n.cols = row.cols();
  return row.tape->record(std::move(n));
}

Var gather_rows(Var x, std::vector<std::size_t> rows) {
  if (!x.valid()) throw Error("gather_rows: invalid variable");
  if (rows.empty()) throw ShapeError("gather_rows: empty row selection");
  for (auto r : rows) {
    if (r >= x.rows()) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of " + describe(x));
  }
  Node n;
  n.kind = OpKind::GatherRows;
  n.lhs = x.id;
  n.blocks = x.blocks();
  n.rows = rows.size();
  n.cols = x.cols();
  n.index = std::move(rows);
  return x.tape->record(std::move(n));
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  if (begin >= end) throw ShapeError("slice_rows: empty range");
  std::vector<std::size_t> rows(end - begin);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
  return gather_rows(x, std::move(rows));
}

Var sum(Var x) {
  if (!x.valid()) throw Error("sum: invalid variable");
  if (x.blocks() != 1) throw ShapeError("sum: expects a primal value, got " + describe(x));
  Node n;
  n.kind = OpKind::SumAll;
  n.lhs = x.id;
  n.rows = 1;
  n.cols = 1;
  return x.tape->record(std::move(n));
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.rows() * x.cols())); }

Var block(Var x, int index) {
  if (!x.valid()) throw Error("block: invalid variable");
  if (index < 0 || index >= x.blocks()) {
    throw ShapeError("block: index " + std::to_string(index) + " out of " + describe(x));
  }
  Node n;
  n.kind = OpKind::Block;
  n.lhs = x.id;
  n.arg = static_cast<std::size_t>(index);
  n.rows = x.rows();
  n.cols = x.cols();
  return x.tape->record(std::move(n));
}

Var reshape_blocks(Var x, std::size_t rows, std::size_t cols) {
  if (!x.valid()) throw Error("reshape_blocks: invalid variable");
  if (rows * cols != x.rows() * x.cols() || rows == 0) {
    throw ShapeError("reshape_blocks: cannot view " + describe(x) + " as " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  Node n;
  n.kind = OpKind::ReshapeBlocks;
  n.lhs = x.id;
  n.blocks = x.blocks();
  n.rows = rows;
  n.cols = cols;
  return x.tape->record(std::move(n));
}

Tensor seed_jet(const Tensor& x, std::span<const std::size_t> axes) {
  const std::size_t R = x.rows(), C = x.cols();
  Tensor out({(1 + 2 * axes.size()) * R, C});
  std::copy(x.data().begin(), x.data().end(), out.ptr());
  for (std::size_t a = 0; a < axes.size(); ++a) {
    if (axes[a] >= C) throw ShapeError("seed_jet: axis " + std::to_string(axes[a]) + " out of " + x.shape_string());
    double* d = out.ptr() + (1 + 2 * a) * R * C;
    for (std::size_t r = 0; r < R; ++r) d[r * C + axes[a]] = 1.0;
  }
  return out;
}

}  // namespace mpipn::ad
