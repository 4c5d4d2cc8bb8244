#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpipn/geometry.hpp"
#include "mpipn/network.hpp"
#include "mpipn/optimizer.hpp"
#include "mpipn/physics.hpp"

namespace mpipn::training {

using cd = std::complex<double>;

enum class Split { Train, Test };

/// One parametric condition with whatever ground truth is known for it.
struct ConditionData {
  physics::ParametricCondition condition;
  /// Closed-form scattered field when the truth is synthetic.
  std::optional<physics::ManufacturedField> field;
  /// Scattered pressure at every cloud point; empty arrays when unknown.
  geometry::DomainField truth;
  /// Priori solutions used by L_obs. Always empty for the test split.
  geometry::ObservationSet observations;
  /// Normal displacement at each coupling point; empty when not supplied.
  std::vector<cd> displacement;

  bool has_truth() const;
};

struct Dataset {
  std::string case_id;
  std::uint64_t seed = 0;
  geometry::PointCloudSet cloud;
  physics::PhysicsConfig physics;
  std::vector<ConditionData> train;  // Gamma
  std::vector<ConditionData> test;   // Lambda
  std::vector<double> implicit_mean, implicit_std;
  double f_min = 300.0, f_max = 500.0;

  const std::vector<ConditionData>& split(Split s) const { return s == Split::Train ? train : test; }
  /// Fingerprint of cloud, conditions and observation positions.
  std::uint64_t hash() const;
  /// Condition list as JSON (one manifest per condition, plus split labels).
  std::string manifest_json() const;
};

struct DatasetOptions {
  std::string case_id = "manufactured";
  std::uint64_t seed = 0;
  /// 0 keeps the case default.
  std::size_t train_conditions = 0;
  std::size_t test_conditions = 0;
  /// Overrides the case's observation budget per domain.
  std::optional<geometry::DomainCounts> observations;
  physics::PhysicsConfig physics;
  /// Attach closed-form plane-wave truth (and derived displacement) to every condition.
  bool synthetic_truth = true;
};

/// Wavenumber of the desk-scale manufactured case on the unit square.
inline constexpr double kDeskWavenumber = 6.0;

/// Gamma / Lambda for a case preset. Deterministic per seed; Lambda never repeats a Gamma condition.
///   case1: f = 300 Hz, random densities and moduli; 1000 / 200.
///   case2: f, densities and moduli random; 1000 / 200.
///   case3: 12 parameter groups x 100 frequencies in [300, 500] Hz, shuffled into 1000 / 200.
///   manufactured: one condition at k = 6 on the unit square, no test conditions.
Dataset build_dataset(const DatasetOptions& options);

/// Model with normalization and implicit statistics fitted to the dataset.
net::ModelParams init_model(const Dataset& data, std::uint64_t seed, const net::ArchConfig& arch = {});

struct TrainConfig {
  std::size_t epochs = 2000;
  OptimizerConfig optimizer;
  /// Cosine decay of the learning rate from optimizer.radam.lr to this value
  /// over the run; a negative value keeps the rate constant.
  double final_lr = -1.0;
  double alpha = 1.0;
  double beta = 0.1;
  /// PDE weight ramps linearly from 0 to beta over this many epochs (0 = constant beta).
  std::size_t beta_warmup = 0;
  std::uint64_t seed = 0;
  /// Writes ckpt_{epoch}.bin every this many epochs (0 = only first and last).
  std::size_t checkpoint_every = 0;
  /// Extra epochs that always get a checkpoint (cluster snapshots).
  std::vector<std::size_t> snapshot_epochs;
  /// Run directory for checkpoints and history.csv; empty keeps everything in memory.
  std::filesystem::path out_dir;
  double divergence_threshold = 1e6;
  /// Called after every epoch with the epoch number and its mean losses.
  std::function<void(std::size_t, const physics::LossBreakdown&)> on_epoch;

  void validate() const;
  double learning_rate(std::size_t epoch) const;
  double pde_weight(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  physics::LossBreakdown loss;
};

struct TrainResult {
  net::ModelParams model;
  std::vector<EpochRecord> history;
};

/// Per-domain loss of the model on one condition; also accumulates parameter
/// gradients (aligned with model.tensors) when `grads` is non-null. An empty
/// vector is first filled with zeros of the right shapes.
physics::LossBreakdown condition_loss(const net::ModelParams& model, const Dataset& data,
                                      const ConditionData& cond, double alpha, double beta,
                                      std::vector<ad::Tensor>* grads);

/// One optimizer step per condition of Gamma, shuffled per epoch. Throws
/// NumericError on divergence; checkpoints already written stay on disk.
TrainResult train(net::ModelParams model, const Dataset& data, const TrainConfig& config);

/// CSV `epoch,L_pad,L_pwr_r,L_pwr_i,L_asc,L_obs,total`.
std::string history_csv(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> parse_history_csv(const std::string& text);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch);

}  // namespace mpipn::training
