#pragma once

// Few-shot support sets and exact k-nearest-neighbour attribution.
//
// Similarity is the dot product of unit vectors (cosine). Ranking order is
// descending similarity, then ascending exemplar index, so ties at the k-th
// rank admit the lowest index. Vote ties between classes go to the class
// with the larger summed similarity among the neighbours, then to the
// smaller label id.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "embattr/embedding_store.hpp"

namespace embattr {

inline constexpr std::size_t kDefaultK = 11;
inline constexpr std::size_t kDefaultShots = 150;

enum class Weighting {
  vote,        ///< posterior[c] = votes for c / k
  similarity,  ///< posterior[c] proportional to summed (1 + cosine) of c's neighbours
};

class SupportSet {
 public:
  /// `exemplars` rows must already be unit length (within 1e-9).
  SupportSet(LabelTable labels, std::vector<LabelId> label_ids, Matrix exemplars,
             std::size_t k_default, std::vector<std::size_t> source_indices = {});

  std::size_t dim() const noexcept { return static_cast<std::size_t>(exemplars_.cols()); }
  std::size_t size() const noexcept { return label_ids_.size(); }
  std::size_t k_default() const noexcept { return k_default_; }
  const LabelTable& labels() const noexcept { return labels_; }
  std::span<const LabelId> label_ids() const noexcept { return label_ids_; }
  const Matrix& exemplars() const noexcept { return exemplars_; }
  /// Positions of the exemplars in the set they were drawn from; empty for
  /// support sets read from disk.
  std::span<const std::size_t> source_indices() const noexcept { return source_indices_; }

  /// Exemplars as an EmbeddingSet (f32-rounded unit vectors).
  EmbeddingSet to_embedding_set() const;

 private:
  LabelTable labels_;
  std::vector<LabelId> label_ids_;
  Matrix exemplars_;
  std::size_t k_default_;
  std::vector<std::size_t> source_indices_;
};

struct Prediction {
  std::vector<double> posterior;  ///< indexed by label id
  LabelId predicted = 0;
  double confidence = 0.0;  ///< posterior[predicted]

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Samples `shots_per_class` exemplars of every class that has records (via
/// partition) and scales them to unit length.
SupportSet build_support(const EmbeddingSet& data, std::size_t shots_per_class, std::size_t k,
                         std::uint64_t seed);

Prediction classify(const SupportSet& support, std::span<const double> query,
                    std::optional<std::size_t> k = std::nullopt,
                    Weighting weighting = Weighting::vote);

/// Element-wise classify over every record of `queries`, in input order.
/// Produces exactly the predictions of classify on each widened row.
std::vector<Prediction> classify_batch(const SupportSet& support, const EmbeddingSet& queries,
                                       std::optional<std::size_t> k = std::nullopt,
                                       Weighting weighting = Weighting::vote);

/// Support sets travel as version-2 EMBS streams carrying k_default. Loading
/// rescales the f32 exemplars back to unit length in double precision.
void save_support(const SupportSet& support, const std::filesystem::path& path);
SupportSet load_support(const std::filesystem::path& path);
SupportSet support_from_embs(const EmbsContents& contents);

}  // namespace embattr
