#pragma once

#include <array>
#include <complex>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mpipn/network.hpp"
#include "mpipn/training.hpp"

namespace mpipn::eval {

using cd = std::complex<double>;

/// Relative domain error: sum |pred - truth| / sum |truth| with complex magnitudes.
/// ConfigError when the truth is identically zero.
double rde(const std::vector<cd>& pred, const std::vector<cd>& truth);

/// Absolute pointwise error, L1 over the (Re, Im) channels.
double ape(cd pred, cd truth);
std::vector<double> ape(const std::vector<cd>& pred, const std::vector<cd>& truth);

struct ConditionMetrics {
  std::size_t index = 0;  // position in the evaluated split
  double f_hz = 0.0;
  std::array<std::optional<double>, 3> rde;  // per domain; empty when the domain has no scored points
  double average() const;
};

struct DomainSummary {
  std::size_t count = 0;
  double average = 0.0, max = 0.0, min = 0.0, variance = 0.0;
};

struct ApeMap {
  std::size_t condition = 0;
  std::vector<geometry::Point2> points;
  std::vector<double> ape;
};

struct EvaluationReport {
  std::string label;
  std::uint64_t dataset_hash = 0;
  std::vector<ConditionMetrics> conditions;
  std::array<DomainSummary, 3> domains;
  std::vector<ApeMap> ape_maps;

  /// Mean of the available per-domain averages.
  double average_rde() const;
};

struct EvalOptions {
  training::Split split = training::Split::Test;
  /// Score only points that were not observed during training.
  bool held_out_only = true;
  /// Keep per-point APE arrays for the first this many conditions.
  std::size_t ape_conditions = 1;
  std::string label = "model";
};

/// Metrics of the model over a split. With an empty test split the training
/// conditions are scored on their held-out points instead.
EvaluationReport evaluate(const net::ModelParams& model, const training::Dataset& data, const EvalOptions& options);

/// Table layout: condition,f_hz,rde_interior,rde_radiation,rde_coupling,average followed by
/// Average / Max / Min / Variance rows aggregated over conditions.
std::string report_csv(const EvaluationReport& report);
std::string report_json(const EvaluationReport& report);
/// `x,y,ape` for one map.
std::string ape_csv(const ApeMap& map);

struct AblationResult {
  EvaluationReport physics;
  EvaluationReport data_driven;
  std::vector<training::EpochRecord> physics_history, data_history;
  /// data-driven average RDE / physics-informed average RDE.
  double improvement_ratio() const;
};

/// Trains the same initial model twice on the same dataset: once with the full
/// loss, once with beta = 0; evaluates both on the held-out points / test split.
AblationResult ablation_run(const training::Dataset& data, const training::TrainConfig& config,
                            std::uint64_t model_seed, const EvalOptions& options = {});

/// CSV with one row per arm plus the improvement ratio column.
std::string ablation_csv(const AblationResult& result);

struct Cluster {
  std::size_t size = 0;
  double area = 0.0;
};

struct ClusterSnapshot {
  std::size_t epoch = 0;
  double threshold = 0.0;
  std::vector<Cluster> clusters;
};

/// Points whose APE exceeds `threshold` grouped by a radius graph (union of
/// points closer than `radius`). Area counts radius^2 / 4 per member point.
std::vector<Cluster> high_error_clusters(const std::vector<geometry::Point2>& points, const std::vector<double>& ape,
                                         double threshold, double radius);

/// Twice the median nearest-neighbour distance.
double cluster_radius(const std::vector<geometry::Point2>& points);

/// q-th percentile (0..100) by linear interpolation.
double percentile(std::vector<double> values, double q);

/// APE clusters of the interior prediction for each (epoch, checkpoint) pair on one
/// training condition. Threshold is the 90th APE percentile of that checkpoint.
/// IoError when a checkpoint is missing.
std::vector<ClusterSnapshot> cluster_snapshot(const std::vector<std::pair<std::size_t, std::filesystem::path>>& ckpts,
                                              const training::Dataset& data, std::size_t condition = 0);

}  // namespace mpipn::eval
