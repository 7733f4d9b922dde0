#pragma once

// JSON config files for the CLI. Unknown keys are rejected so that typos do
// not silently fall back to defaults.
//
// Experiment:
//   {"name", "train_classes": [..], "shots_per_class", "k", "seed", "tau",
//    "learnable_tau", "head_dims": [hidden.., out], "weighting": "vote"|"similarity",
//    "train": {"batch_size", "epochs", "learning_rate", "seed",
//              "classes_per_batch", "samples_per_class"}}
// Splits:  {"experiment": {..}, "train_fraction", "splits": [{"seen": [..], "unseen": [..]}]}
// Sweep:   {"data" | "train_data" + "test_data", "train_fraction", "shots_grid": [..],
//           "repeats", "base": {experiment}}
// Clusters: {"num_classes", "dim", "count_per_class", "seed", "spread": x | [..],
//            "means": [[..]..] | "separation": x (+ "means_seed"), "label_names": [..]}

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "embattr/harness.hpp"
#include "embattr/trainer.hpp"

namespace embattr {

nlohmann::json load_json(const std::filesystem::path& path);

ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::ordered_json experiment_to_json(const ExperimentConfig& cfg);

struct SplitsConfig {
  ExperimentConfig experiment;
  SplitSet splits;
};
SplitsConfig splits_from_json(const nlohmann::json& j);

struct SweepFile {
  SweepConfig sweep;
  /// Paths are resolved against the config file's directory by the CLI.
  std::optional<std::string> data;
  std::optional<std::string> train_data;
  std::optional<std::string> test_data;
  double train_fraction = 0.5;
};
SweepFile sweep_from_json(const nlohmann::json& j);

ClusterSpec cluster_spec_from_json(const nlohmann::json& j);

}  // namespace embattr
