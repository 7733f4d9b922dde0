#pragma once

// Experiment protocol: train a head on the seen classes, draw a few-shot
// support set for every test class from the test pool, and score the rest of
// the pool against it.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embattr/embedding_store.hpp"
#include "embattr/knn.hpp"
#include "embattr/openset_metrics.hpp"
#include "embattr/projection_head.hpp"
#include "embattr/trainer.hpp"

namespace embattr {

struct ExperimentConfig {
  std::string name = "experiment";
  /// Classes the head is trained on; these are the seen classes.
  std::vector<std::string> train_label_names;
  std::size_t shots_per_class = kDefaultShots;
  std::size_t k = kDefaultK;
  std::uint64_t seed = 0;  ///< head initialisation and support sampling
  /// Hidden widths followed by the output width; the input width comes from the data.
  std::vector<std::size_t> head_dims = {32, 16};
  Weighting weighting = Weighting::vote;
  TrainConfig train;

  void validate() const;
};

struct ExperimentResult {
  MetricsReport report;
  std::vector<EvalRecord> records;
  ProjectionHead head;
  std::vector<double> history;
  std::vector<std::size_t> support_indices;  ///< positions in the test set
  std::vector<std::size_t> eval_indices;     ///< positions in the test set
};

/// Trains on `train_data` restricted to cfg.train_label_names.
TrainResult train_for_experiment(const ExperimentConfig& cfg, const EmbeddingSet& train_data);

/// Support sampling and scoring with an already trained head. Seen classes
/// are cfg.train_label_names resolved against test_data's label table.
ExperimentResult evaluate_with_head(const ExperimentConfig& cfg, const ProjectionHead& head,
                                    const EmbeddingSet& test_data, std::size_t shots,
                                    std::uint64_t support_seed);

ExperimentResult run_experiment(const ExperimentConfig& cfg, const EmbeddingSet& train_data,
                                const EmbeddingSet& test_data);

/// Seeded per-class division of one set into training and test pools:
/// floor(count * train_fraction) records of each class go to training.
struct Pools {
  EmbeddingSet train;
  EmbeddingSet test;
};
Pools split_pools(const EmbeddingSet& data, double train_fraction, std::uint64_t seed);

struct SplitSpec {
  std::vector<std::string> seen;
  std::vector<std::string> unseen;
};

struct SplitSet {
  std::vector<SplitSpec> splits;
  double train_fraction = 0.5;

  void validate() const;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  ///< population
};
MeanStd mean_stddev(std::span<const double> values);

struct SplitsResult {
  std::vector<ExperimentResult> per_split;
  /// Metric name -> mean and population standard deviation over the splits
  /// that report it. Names follow report_csv_header().
  std::map<std::string, MeanStd> summary;
  /// Scalar fields and per-class scores averaged over the splits.
  MetricsReport mean;
};

/// Pools are drawn once with base.seed; each split trains on its seen classes
/// and is tested on its seen and unseen classes.
SplitsResult run_splits(const SplitSet& splits, const EmbeddingSet& data,
                        const ExperimentConfig& base);

struct SweepConfig {
  std::vector<std::size_t> shots_grid = {10, 25, 50, 100, 150, 500, 1000, 2500, 5000};
  std::size_t repeats = 1;
  ExperimentConfig base;

  void validate() const;
};

struct SweepRow {
  std::size_t shots = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::optional<double> accuracy;  ///< attribution accuracy over the evaluated records
  std::optional<double> closed_accuracy;
  std::string error;  ///< error category when the point could not be run
};

/// One head trained with cfg.base, reused for every point. Repeat r samples
/// its support with seed base.seed + r. A point whose shots exceed some test
/// class's record count yields an error row and the sweep moves on.
std::vector<SweepRow> sweep_shots(const SweepConfig& cfg, const EmbeddingSet& train_data,
                                  const EmbeddingSet& test_data);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Real-vs-rest detection figures for every generator present in the records.
struct DetectionSummary {
  double accuracy = 0.0;
  double auc = 0.0;
  std::map<std::string, double> per_generator_accuracy;
};
std::optional<DetectionSummary> detection_summary(std::span<const EvalRecord> records,
                                                  const LabelTable& labels,
                                                  const std::string& real_name = "real");

}  // namespace embattr
