#pragma once

// Labeled embedding collections and the EMBS interchange format.
//
// EMBS layout (little-endian):
//   0..3    magic "EMBS"
//   4..7    version u32 (1, or 2 for support sets)
//   8..11   dim u32
//   12..19  count u64
//   20..23  label block length L u32
//   L bytes label names joined by '\n', no trailing newline
//   version 2 only: k_default u32
//   count records of: label_id u32, dim x f32

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace embattr {

using LabelId = std::uint32_t;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Ordered, duplicate-free class names; a name's id is its position.
class LabelTable {
 public:
  LabelTable() = default;
  explicit LabelTable(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  const std::string& name(LabelId id) const;
  std::optional<LabelId> find(std::string_view name) const;
  /// Throws Errc::unknown_label when absent.
  LabelId id(std::string_view name) const;
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const LabelTable& a, const LabelTable& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, LabelId> index_;
};

/// Immutable set of labeled vectors. Coordinates are held as f32, exactly as
/// stored on disk, so a write/read cycle reproduces the set bit for bit;
/// arithmetic consumers widen to double through row_vector() / to_matrix().
class EmbeddingSet {
 public:
  EmbeddingSet(std::size_t dim, LabelTable labels);
  EmbeddingSet(std::size_t dim, LabelTable labels, std::vector<LabelId> label_ids,
               std::vector<float> coords);

  /// Rounds every entry of `rows` to f32.
  static EmbeddingSet from_matrix(LabelTable labels, std::vector<LabelId> label_ids,
                                  const Matrix& rows);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return label_ids_.size(); }
  bool empty() const noexcept { return label_ids_.empty(); }
  const LabelTable& labels() const noexcept { return labels_; }

  LabelId label_id(std::size_t i) const { return label_ids_.at(i); }
  std::span<const LabelId> label_ids() const noexcept { return label_ids_; }
  std::span<const float> row(std::size_t i) const;
  std::span<const float> coords() const noexcept { return coords_; }

  Vector row_vector(std::size_t i) const;
  Matrix to_matrix() const;

  /// Records at `indices`, in that order, with the same label table.
  EmbeddingSet subset(std::span<const std::size_t> indices) const;
  /// Number of records per label id (length labels().size()).
  std::vector<std::size_t> class_counts() const;

  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b);

 private:
  std::size_t dim_;
  LabelTable labels_;
  std::vector<LabelId> label_ids_;
  std::vector<float> coords_;
};

struct EmbsContents {
  EmbeddingSet set;
  /// Present only in version-2 (support set) streams.
  std::optional<std::uint32_t> k_default;
};

/// Emits the EMBS layout. A k_default turns the stream into version 2.
void write_set(const EmbeddingSet& set, std::ostream& out,
               std::optional<std::uint32_t> k_default = std::nullopt);
EmbsContents read_embs(std::istream& in);
EmbeddingSet read_set(std::istream& in);

void save_set(const EmbeddingSet& set, const std::filesystem::path& path,
              std::optional<std::uint32_t> k_default = std::nullopt);
EmbsContents load_embs(const std::filesystem::path& path);
EmbeddingSet load_set(const std::filesystem::path& path);

struct Partition {
  EmbeddingSet selected;
  EmbeddingSet remainder;
  /// Positions in the source set, ascending.
  std::vector<std::size_t> selected_indices;
  std::vector<std::size_t> remainder_indices;
};

/// Draws up to `per_class_cap` records (all of them when unset) of each
/// requested class without replacement. Classes are visited in ascending id
/// order and sampled by a partial Fisher-Yates shuffle from Rng(seed). Both
/// outputs keep the source order.
Partition partition(const EmbeddingSet& set, std::span<const LabelId> label_ids,
                    std::optional<std::size_t> per_class_cap, std::uint64_t seed);

}  // namespace embattr
