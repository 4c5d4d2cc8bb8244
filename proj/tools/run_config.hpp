#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mpipn/network.hpp"
#include "mpipn/training.hpp"

namespace mpipn::cli {

/// Everything a run needs, loaded from one JSON file. A single seed drives
/// geometry, dataset draws, network init and condition shuffling.
struct RunConfig {
  std::string case_id = "manufactured";
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";
  training::DatasetOptions dataset;
  training::TrainConfig train;
  net::ArchConfig arch;
  bool held_out_only = true;
  std::size_t ape_conditions = 1;

  /// Dataset options with the case and seed filled in.
  training::DatasetOptions dataset_options() const;
  /// Train config with seed and output directory filled in.
  training::TrainConfig train_config() const;
};

/// Missing keys keep their defaults; unknown keys are rejected so typos surface.
RunConfig parse_run_config(const std::string& json);
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_json(const RunConfig& config);

}  // namespace mpipn::cli
