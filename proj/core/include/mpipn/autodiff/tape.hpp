#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "mpipn/autodiff/tensor.hpp"

namespace mpipn::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
///
/// A node's value may carry Taylor jets: it is stored as `blocks` stacked
/// copies of a rows x cols array laid out [primal, d_1, s_1, ..., d_A, s_A],
/// where d_a / s_a are the first / second derivatives along seeded direction a.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  int blocks() const;
  std::size_t rows() const;  // per block
  std::size_t cols() const;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  MatMul,
  Unary,
  Affine,
  MaxPoolRows,
  ConcatCols,
  BroadcastRows,
  GatherRows,
  SumAll,
  Block,
  ReshapeBlocks,
};

enum class UnaryFn : std::uint8_t { Exp, Log1p, Tanh, Sin, Cos, Mish, Softplus, Square, Recip, Abs };

std::string_view op_name(OpKind kind);
std::string_view unary_name(UnaryFn fn);

/// Number of seeded directions carried by a jet with `blocks` blocks.
constexpr int jet_axes(int blocks) { return (blocks - 1) / 2; }
constexpr int jet_blocks(int axes) { return 1 + 2 * axes; }

struct Node {
  OpKind kind = OpKind::Leaf;
  int lhs = -1;
  int rhs = -1;
  int blocks = 1;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool requires_grad = false;
  Tensor value;

  UnaryFn fn = UnaryFn::Exp;
  double alpha = 1.0;  // Affine scale
  double beta = 0.0;   // Affine shift (primal block only)
  std::size_t arg = 0;  // Block index / broadcast rows / reshape rows
  std::size_t arg2 = 0;  // reshape cols
  std::vector<std::size_t> index;  // gathered rows, or max-pool winners per column
  std::vector<double> cache;       // elementwise derivative tables
};

/// Linear record of primitive operations, topologically ordered by construction.
///
/// Single-threaded during record, replay and backward. Distinct tapes share
/// nothing and may be used from different threads.
class Tape {
 public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Marks an input slot. `blocks` > 1 means the value is an already seeded jet.
  Var leaf(Tensor value, bool requires_grad = false, int blocks = 1);

  /// Records a node built by the op functions; computes its value.
  Var record(Node node);

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const Tensor& value(Var v) const { return node(v.id).value; }
  std::size_t size() const { return nodes_.size(); }

  /// Overwrites a leaf's value (same shape). Call replay() to refresh dependents.
  void set_leaf(Var leaf, Tensor value);

  /// Recomputes every non-leaf node in recorded order.
  void replay();

  /// Reverse sweep from a 1x1 primal output. Gradients accumulate into every
  /// node that requires them; call zero_grad() to reset.
  void backward(Var output);
  void zero_grad();

  /// Gradient w.r.t. a node (same shape as its value); zeros if none reached it.
  Tensor grad(Var v) const;

 private:
  void compute(Node& n) const;
  void propagate(std::size_t id);
  void check_finite(std::size_t id) const;
  Tensor& grad_slot(int id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool check_finite_;
};

}  // namespace mpipn::ad
