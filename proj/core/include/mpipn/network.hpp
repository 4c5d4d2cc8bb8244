#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mpipn/autodiff/ops.hpp"
#include "mpipn/geometry.hpp"

namespace mpipn::net {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using geometry::DomainTag;

struct ArchConfig {
  std::size_t input_dim = 3;  // (x, y, f)
  std::vector<std::size_t> tnet_point = {32, 64};
  std::vector<std::size_t> tnet_dense = {32};
  std::vector<std::size_t> local_pre = {64, 64};
  std::vector<std::size_t> local_post = {32};
  std::vector<std::size_t> global_mlp = {64, 128};
  std::size_t implicit_dim = 50;
  std::vector<std::size_t> head_hidden = {128, 64, 32};
  std::size_t output_channels = 2;
  std::size_t heads = 3;

  std::size_t local_width() const { return local_post.back(); }
  std::size_t global_width() const { return global_mlp.back(); }
  std::size_t criteria_width() const { return implicit_dim + local_width() + global_width(); }

  /// Flat descriptor stored in checkpoints; from_descriptor inverts it.
  std::vector<std::uint64_t> descriptor() const;
  static ArchConfig from_descriptor(const std::vector<std::uint64_t>& d);
  void validate() const;
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct ParamTensor {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Every tensor of the model in declaration order. Non-trainable entries hold
/// the input normalization (norm.center, norm.scale: 1 x 3) and the frozen
/// implicit-quantity statistics (implicit.mean, implicit.std: 1 x 50).
struct ModelParams {
  ArchConfig arch;
  std::vector<ParamTensor> tensors;

  std::size_t index(std::string_view name) const;
  const Tensor& at(std::string_view name) const { return tensors[index(name)].value; }
  Tensor& at(std::string_view name) { return tensors[index(name)].value; }
  std::size_t trainable_count() const;
};

/// Fan-in uniform weights and biases in +-1/sqrt(fan_in); T-Net output layers
/// start at zero so every transform begins as the identity.
ModelParams init_params(std::uint64_t seed, const ArchConfig& arch = {});

/// Maps raw (x, y, f) columns to roughly [-1, 1]: (v - center) / scale.
void set_input_normalization(ModelParams& model, const geometry::Rect& outer, double f_min, double f_max);

/// Freezes z-score statistics of the implicit quantities.
void set_implicit_stats(ModelParams& model, const std::vector<double>& mean, const std::vector<double>& stddev);

/// Tape leaves for every model tensor; trainable ones record gradients when asked.
struct Bound {
  const ModelParams* model = nullptr;
  std::vector<Var> vars;
  Var operator[](std::string_view name) const { return vars[model->index(name)]; }
};
Bound bind(Tape& tape, const ModelParams& model, bool requires_grad);

struct Dense {
  Var w;
  Var b;
};
/// Layers "<prefix>.l0", "<prefix>.l1", ... as bound on the tape.
std::vector<Dense> layers(const Bound& p, std::string_view prefix);

// Pipeline stages. Inputs and outputs may carry Taylor jets.

/// Columnwise (x, y, f). Empty inputs give an empty result.
Tensor stack_quantities(const Tensor& coords, const Tensor& quantity);
Var stack_quantities(Var coords, Var quantity);

/// Shared-kernel MLP over points, Mish on every layer except a linear last one when requested.
Var matrix_mlp(Var input, const std::vector<Dense>& mlp, bool linear_last = false);

/// Cloud-level m x m transform (identity plus learned correction).
Var tnet_matrix(Var input, const Bound& p, std::string_view prefix);
/// input * T(input).
Var feature_transform(Var input, const Bound& p, std::string_view prefix);

/// Normalization, FT(3), MLP, FT(64), MLP: N x 32.
Var local_extractor(Var stacked, const Bound& p);
/// Feature-wise maximum of the global MLP over the domain's points: 1 x 128.
Var global_feature(Var local, const Bound& p);
/// global_feature broadcast back to every point: N x 128.
Var global_extractor(Var local, const Bound& p);

/// z-score of 50 raw implicit quantities with frozen statistics.
std::vector<double> encode_implicit(const std::vector<double>& raw, const std::vector<double>& mean,
                                    const std::vector<double>& stddev);

/// Literal (S_p, S_L, S_G) concatenation, N x 210.
Var criteria_sequence(Var implicit_row, Var local, Var global_row);

/// Head for `tag` applied to an N x 210 criteria sequence.
Var criteria_solver(Var criteria, DomainTag tag, const Bound& p);

/// Whole pipeline for one domain cloud. Evaluates the first head layer as
/// S_L W_L + broadcast(S_p W_p + S_G W_G + b), which equals the concatenated form.
Var forward_domain(Var stacked, const std::vector<double>& implicit_code, DomainTag tag, const Bound& p);

/// Same as forward_domain through the literal 210-wide concatenation.
Var forward_domain_literal(Var stacked, const std::vector<double>& implicit_code, DomainTag tag, const Bound& p);

/// Plain per-domain predictions (N x C); empty tensors for empty domains.
std::array<Tensor, 3> forward(const ModelParams& model, const geometry::PointCloudSet& cloud, double f_hz,
                              const std::vector<double>& implicit_raw);

// Binary checkpoint: magic, format version, architecture descriptor, every
// tensor as little-endian f64 in declaration order, FNV-1a 64 checksum.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& model);
ModelParams load_checkpoint(const std::filesystem::path& path);
std::string serialize(const ModelParams& model);
ModelParams deserialize(std::string_view bytes);

}  // namespace mpipn::net
