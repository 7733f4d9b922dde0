#include "embattr/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "embattr/error.hpp"

namespace embattr {

namespace {

constexpr double kMinNorm = 1e-12;
constexpr double kUnitTolerance = 1e-9;
constexpr std::size_t kQueryBlock = 32;
constexpr std::size_t kExemplarBlock = 32;

// Sixteen independent partial sums: vectorizes without reassociating, so the
// result is the same bits wherever it is called from.
double dot(const double* a, const double* b, std::size_t n) {
  double acc[16] = {};
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    for (std::size_t j = 0; j < 16; ++j) acc[j] += a[i + j] * b[i + j];
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < 16; ++j) sum += acc[j];
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

// Writes query / |query| into `out`.
void to_unit(std::span<const double> query, double* out) {
  double sq = 0.0;
  for (const double x : query) {
    if (!std::isfinite(x)) throw Error(Errc::non_finite, "query contains non-finite entries");
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > kMinNorm)) throw Error(Errc::degenerate_vector, "query has zero norm");
  for (std::size_t j = 0; j < query.size(); ++j) out[j] = query[j] / norm;
}

std::size_t resolve_k(const SupportSet& support, std::optional<std::size_t> k) {
  const std::size_t kk = k.value_or(support.k_default());
  if (kk == 0 || kk > support.size()) {
    throw Error(Errc::configuration, "k = " + std::to_string(kk) + " with " +
                                         std::to_string(support.size()) + " exemplars");
  }
  return kk;
}

Prediction vote(const SupportSet& support, std::span<const double> sims, std::size_t k,
                Weighting weighting, std::vector<std::size_t>& order) {
  order.resize(sims.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return sims[a] > sims[b] || (sims[a] == sims[b] && a < b);
                    });

  const std::size_t classes = support.labels().size();
  std::vector<std::size_t> votes(classes, 0);
  std::vector<double> sim_sum(classes, 0.0);
  std::vector<double> weight(classes, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const auto c = support.label_ids()[order[r]];
    ++votes[c];
    sim_sum[c] += sims[order[r]];
    weight[c] += 1.0 + sims[order[r]];
  }

  Prediction p;
  p.posterior.assign(classes, 0.0);
  const double total_weight = std::accumulate(weight.begin(), weight.end(), 0.0);
  const bool weighted = weighting == Weighting::similarity && total_weight > 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    p.posterior[c] = weighted ? weight[c] / total_weight
                              : static_cast<double>(votes[c]) / static_cast<double>(k);
  }

  LabelId best = support.label_ids()[order[0]];
  for (LabelId c = 0; c < classes; ++c) {
    if (votes[c] == 0 || c == best) continue;
    const bool better =
        weighted ? (weight[c] > weight[best] ||
                    (weight[c] == weight[best] &&
                     (sim_sum[c] > sim_sum[best] || (sim_sum[c] == sim_sum[best] && c < best))))
                 : (votes[c] > votes[best] ||
                    (votes[c] == votes[best] &&
                     (sim_sum[c] > sim_sum[best] || (sim_sum[c] == sim_sum[best] && c < best))));
    if (better) best = c;
  }
  p.predicted = best;
  p.confidence = p.posterior[best];
  return p;
}

}  // namespace

SupportSet::SupportSet(LabelTable labels, std::vector<LabelId> label_ids, Matrix exemplars,
                       std::size_t k_default, std::vector<std::size_t> source_indices)
    : labels_(std::move(labels)),
      label_ids_(std::move(label_ids)),
      exemplars_(std::move(exemplars)),
      k_default_(k_default),
      source_indices_(std::move(source_indices)) {
  if (exemplars_.cols() == 0) throw Error(Errc::validation, "support dimension must be positive");
  if (static_cast<std::size_t>(exemplars_.rows()) != label_ids_.size()) {
    throw Error(Errc::dimension, "exemplar rows do not match label ids");
  }
  if (!source_indices_.empty() && source_indices_.size() != label_ids_.size()) {
    throw Error(Errc::dimension, "source indices do not match exemplars");
  }
  for (const auto id : label_ids_) {
    if (id >= labels_.size()) throw Error(Errc::label_out_of_range, "exemplar label out of range");
  }
  for (Eigen::Index i = 0; i < exemplars_.rows(); ++i) {
    if (std::abs(exemplars_.row(i).norm() - 1.0) > kUnitTolerance) {
      throw Error(Errc::validation, "exemplar " + std::to_string(i) + " is not unit length");
    }
  }
  if (k_default_ == 0 || k_default_ > label_ids_.size()) {
    throw Error(Errc::configuration, "k = " + std::to_string(k_default_) + " with " +
                                         std::to_string(label_ids_.size()) + " exemplars");
  }
}

EmbeddingSet SupportSet::to_embedding_set() const {
  return EmbeddingSet::from_matrix(labels_, label_ids_, exemplars_);
}

SupportSet build_support(const EmbeddingSet& data, std::size_t shots_per_class, std::size_t k,
                         std::uint64_t seed) {
  if (data.empty()) throw Error(Errc::validation, "cannot build a support set from no data");
  if (shots_per_class == 0) throw Error(Errc::configuration, "shots per class must be positive");
  std::vector<LabelId> present;
  const auto counts = data.class_counts();
  for (LabelId c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) present.push_back(c);
  }
  auto split = partition(data, present, shots_per_class, seed);
  if (k == 0 || k > split.selected.size()) {
    throw Error(Errc::configuration, "k = " + std::to_string(k) + " with " +
                                         std::to_string(split.selected.size()) + " exemplars");
  }
  Matrix rows(static_cast<Eigen::Index>(split.selected.size()),
              static_cast<Eigen::Index>(data.dim()));
  std::vector<double> widened(data.dim());
  for (std::size_t i = 0; i < split.selected.size(); ++i) {
    const auto r = split.selected.row(i);
    std::copy(r.begin(), r.end(), widened.begin());
    try {
      to_unit(widened, rows.row(static_cast<Eigen::Index>(i)).data());
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_vector) throw;
      throw Error(Errc::degenerate_vector,
                  "exemplar drawn from record " + std::to_string(split.selected_indices[i]) +
                      " has zero norm");
    }
  }
  std::vector<LabelId> ids(split.selected.label_ids().begin(), split.selected.label_ids().end());
  return SupportSet(data.labels(), std::move(ids), std::move(rows), k,
                    std::move(split.selected_indices));
}

Prediction classify(const SupportSet& support, std::span<const double> query,
                    std::optional<std::size_t> k, Weighting weighting) {
  if (query.size() != support.dim()) {
    throw Error(Errc::dimension, "query width " + std::to_string(query.size()) +
                                     " does not match support width " +
                                     std::to_string(support.dim()));
  }
  const std::size_t kk = resolve_k(support, k);
  std::vector<double> unit(query.size());
  to_unit(query, unit.data());
  std::vector<double> sims(support.size());
  const double* base = support.exemplars().data();
  for (std::size_t e = 0; e < support.size(); ++e) {
    sims[e] = dot(base + e * support.dim(), unit.data(), support.dim());
  }
  std::vector<std::size_t> order;
  return vote(support, sims, kk, weighting, order);
}

std::vector<Prediction> classify_batch(const SupportSet& support, const EmbeddingSet& queries,
                                       std::optional<std::size_t> k, Weighting weighting) {
  std::vector<Prediction> out;
  if (queries.empty()) return out;
  if (queries.dim() != support.dim()) {
    throw Error(Errc::dimension, "query width " + std::to_string(queries.dim()) +
                                     " does not match support width " +
                                     std::to_string(support.dim()));
  }
  const std::size_t kk = resolve_k(support, k);
  const std::size_t dim = support.dim();
  const std::size_t n_ex = support.size();
  const double* base = support.exemplars().data();
  out.reserve(queries.size());

  std::vector<double> units(kQueryBlock * dim);
  std::vector<double> widened(dim);
  std::vector<double> sims(kQueryBlock * n_ex);
  std::vector<std::size_t> order;
  for (std::size_t q0 = 0; q0 < queries.size(); q0 += kQueryBlock) {
    const std::size_t nq = std::min(kQueryBlock, queries.size() - q0);
    for (std::size_t q = 0; q < nq; ++q) {
      const auto r = queries.row(q0 + q);
      std::copy(r.begin(), r.end(), widened.begin());
      to_unit(widened, units.data() + q * dim);
    }
    // Tiled so both operand blocks stay cache resident.
    for (std::size_t e0 = 0; e0 < n_ex; e0 += kExemplarBlock) {
      const std::size_t ne = std::min(kExemplarBlock, n_ex - e0);
      for (std::size_t q = 0; q < nq; ++q) {
        for (std::size_t e = e0; e < e0 + ne; ++e) {
          sims[q * n_ex + e] = dot(base + e * dim, units.data() + q * dim, dim);
        }
      }
    }
    for (std::size_t q = 0; q < nq; ++q) {
      out.push_back(vote(support, std::span<const double>(sims).subspan(q * n_ex, n_ex), kk,
                         weighting, order));
    }
  }
  return out;
}

void save_support(const SupportSet& support, const std::filesystem::path& path) {
  save_set(support.to_embedding_set(), path, static_cast<std::uint32_t>(support.k_default()));
}

SupportSet support_from_embs(const EmbsContents& contents) {
  if (!contents.k_default) {
    throw Error(Errc::unsupported_version, "support sets are version-2 EMBS streams");
  }
  const auto& set = contents.set;
  Matrix rows(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(set.dim()));
  std::vector<double> widened(set.dim());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto r = set.row(i);
    std::copy(r.begin(), r.end(), widened.begin());
    to_unit(widened, rows.row(static_cast<Eigen::Index>(i)).data());
  }
  std::vector<LabelId> ids(set.label_ids().begin(), set.label_ids().end());
  return SupportSet(set.labels(), std::move(ids), std::move(rows), *contents.k_default);
}

SupportSet load_support(const std::filesystem::path& path) {
  return support_from_embs(load_embs(path));
}

}  // namespace embattr
