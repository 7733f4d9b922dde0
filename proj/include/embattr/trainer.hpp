#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "embattr/contrastive.hpp"
#include "embattr/embedding_store.hpp"
#include "embattr/projection_head.hpp"

namespace embattr {

/// Class-balanced minibatch gradient descent settings. Every batch holds
/// `samples_per_class` records from each of `classes_per_batch` classes.
struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t epochs = 20;
  double learning_rate = 0.05;
  Temperature tau{};
  std::uint64_t seed = 0;
  std::size_t classes_per_batch = 4;
  std::size_t samples_per_class = 2;

  void validate() const;
};

struct TrainResult {
  ProjectionHead head;
  /// Mean batch loss of each epoch, measured before each step.
  std::vector<double> history;
  /// Final temperature; differs from the configured one only when learnable.
  Temperature tau;
};

/// Loss of supcon_loss(l2_normalize(head.forward(inputs))) and its gradient
/// with respect to every head parameter.
struct HeadLoss {
  double loss = 0.0;
  ProjectionHead::Gradients grads;
  std::optional<double> grad_tau;
};
HeadLoss head_loss_and_grad(const ProjectionHead& head, const Matrix& inputs,
                            const std::vector<LabelId>& labels, Temperature tau);

/// One epoch is floor(min class count / samples_per_class) batches. For each
/// epoch every class's records are reshuffled, and each batch picks its
/// classes by a partial shuffle of the class list; all draws come from one
/// Rng(cfg.seed). Classes without records are ignored.
TrainResult train(ProjectionHead head, const EmbeddingSet& data, const TrainConfig& cfg);

struct ClusterSpec {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> means;
  std::vector<double> spread;  ///< per-class standard deviation
  std::size_t count_per_class = 0;
  std::uint64_t seed = 0;
  /// Defaults to class0, class1, ...
  std::vector<std::string> label_names;

  void validate() const;
};

/// count_per_class samples of mean + spread * N(0, I) per class, class by class.
EmbeddingSet make_clusters(const ClusterSpec& spec);

/// `num_classes` means whose pairwise distances all equal `separation`:
/// a seeded random orthonormal frame scaled by separation / sqrt(2).
/// Requires dim >= num_classes.
std::vector<std::vector<double>> separated_means(std::size_t num_classes, std::size_t dim,
                                                 double separation, std::uint64_t seed);

}  // namespace embattr
