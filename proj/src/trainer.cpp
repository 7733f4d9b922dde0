#include "embattr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "embattr/error.hpp"
#include "embattr/random.hpp"

namespace embattr {

void TrainConfig::validate() const {
  if (batch_size == 0 || epochs == 0 || classes_per_batch == 0 || samples_per_class == 0) {
    throw Error(Errc::configuration, "batch size, epochs and batch composition must be positive");
  }
  if (classes_per_batch * samples_per_class != batch_size) {
    throw Error(Errc::configuration, "classes_per_batch x samples_per_class must equal batch_size");
  }
  if (samples_per_class < 2) {
    throw Error(Errc::configuration, "samples_per_class must be at least 2");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(Errc::configuration, "learning rate must be finite and nonnegative");
  }
  if (!(tau.value > 0.0) || !std::isfinite(tau.value)) {
    throw Error(Errc::configuration, "temperature must be positive and finite");
  }
}

HeadLoss head_loss_and_grad(const ProjectionHead& head, const Matrix& inputs,
                            const std::vector<LabelId>& labels, Temperature tau) {
  ProjectionHead::Tape tape;
  const Matrix raw = head.forward(inputs, tape);
  const LabeledBatch batch{normalize_rows(raw), labels, true};
  auto res = supcon_loss_and_grad(batch, tau);
  const Matrix grad_raw = normalize_rows_backward(raw, res.grad_z);
  return {res.loss, head.backward(tape, grad_raw), res.grad_tau};
}

TrainResult train(ProjectionHead head, const EmbeddingSet& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw Error(Errc::composition, "training data is empty");
  if (data.dim() != head.input_dim()) {
    throw Error(Errc::dimension, "data width does not match head input");
  }

  std::vector<std::vector<std::size_t>> pools(data.labels().size());
  for (std::size_t i = 0; i < data.size(); ++i) pools[data.label_id(i)].push_back(i);
  std::vector<LabelId> classes;
  std::size_t min_count = data.size();
  for (LabelId c = 0; c < pools.size(); ++c) {
    if (pools[c].empty()) continue;
    if (pools[c].size() < cfg.samples_per_class) {
      throw Error(Errc::composition, "class " + data.labels().name(c) + " has " +
                                         std::to_string(pools[c].size()) + " records, needs " +
                                         std::to_string(cfg.samples_per_class));
    }
    classes.push_back(c);
    min_count = std::min(min_count, pools[c].size());
  }
  if (classes.size() < cfg.classes_per_batch) {
    throw Error(Errc::composition, "data has " + std::to_string(classes.size()) +
                                       " classes, batches need " +
                                       std::to_string(cfg.classes_per_batch));
  }

  const std::size_t batches = min_count / cfg.samples_per_class;
  const Matrix all = data.to_matrix();
  Rng rng(cfg.seed);
  auto shuffle = [&rng](auto& v) {
    for (std::size_t j = v.size(); j > 1; --j) std::swap(v[j - 1], v[rng.below(j)]);
  };

  TrainResult result{std::move(head), {}, cfg.tau};
  Matrix inputs(static_cast<Eigen::Index>(cfg.batch_size), all.cols());
  std::vector<LabelId> labels(cfg.batch_size);
  std::vector<std::size_t> cursor(pools.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto c : classes) shuffle(pools[c]);
    std::fill(cursor.begin(), cursor.end(), 0);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t j = 0; j < cfg.classes_per_batch; ++j) {
        std::swap(classes[j], classes[j + rng.below(classes.size() - j)]);
      }
      Eigen::Index row = 0;
      for (std::size_t j = 0; j < cfg.classes_per_batch; ++j) {
        const auto c = classes[j];
        for (std::size_t s = 0; s < cfg.samples_per_class; ++s, ++row) {
          inputs.row(row) = all.row(static_cast<Eigen::Index>(pools[c][cursor[c]++]));
          labels[static_cast<std::size_t>(row)] = c;
        }
      }

      HeadLoss step;
      try {
        step = head_loss_and_grad(result.head, inputs, labels, result.tau);
      } catch (const Error& e) {
        // overflowed activations surface as degenerate or non-finite rows
        if (e.code() != Errc::degenerate_vector && e.code() != Errc::non_finite) throw;
        throw Error(Errc::divergence, std::string(e.what()) + " at epoch " +
                                          std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      if (!std::isfinite(step.loss)) {
        throw Error(Errc::divergence, "non-finite loss at epoch " + std::to_string(epoch) +
                                          ", batch " + std::to_string(b));
      }
      epoch_loss += step.loss;
      result.head.step(step.grads, cfg.learning_rate);
      if (step.grad_tau) result.tau.value -= cfg.learning_rate * *step.grad_tau;
      if (!result.head.all_finite() || !(result.tau.value > 0.0)) {
        throw Error(Errc::divergence, "parameters left the finite domain at epoch " +
                                          std::to_string(epoch) + ", batch " + std::to_string(b));
      }
    }
    result.history.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

void ClusterSpec::validate() const {
  if (num_classes == 0 || dim == 0 || count_per_class == 0) {
    throw Error(Errc::configuration, "cluster spec needs positive classes, dim and count");
  }
  if (means.size() != num_classes) {
    throw Error(Errc::configuration, "cluster spec needs one mean per class");
  }
  for (const auto& m : means) {
    if (m.size() != dim) throw Error(Errc::dimension, "cluster mean has the wrong length");
    for (const double x : m) {
      if (!std::isfinite(x)) throw Error(Errc::non_finite, "cluster mean is not finite");
    }
  }
  if (spread.size() != num_classes) {
    throw Error(Errc::configuration, "cluster spec needs one spread per class");
  }
  for (const double s : spread) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw Error(Errc::configuration, "cluster spread must be finite and nonnegative");
    }
  }
  if (!label_names.empty() && label_names.size() != num_classes) {
    throw Error(Errc::configuration, "cluster spec needs one label name per class");
  }
}

EmbeddingSet make_clusters(const ClusterSpec& spec) {
  spec.validate();
  std::vector<std::string> names = spec.label_names;
  if (names.empty()) {
    for (std::size_t c = 0; c < spec.num_classes; ++c) names.push_back("class" + std::to_string(c));
  }
  Rng rng(spec.seed);
  std::vector<LabelId> ids;
  std::vector<float> coords;
  ids.reserve(spec.num_classes * spec.count_per_class);
  coords.reserve(spec.num_classes * spec.count_per_class * spec.dim);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t s = 0; s < spec.count_per_class; ++s) {
      ids.push_back(static_cast<LabelId>(c));
      for (std::size_t j = 0; j < spec.dim; ++j) {
        coords.push_back(static_cast<float>(spec.means[c][j] + spec.spread[c] * rng.normal()));
      }
    }
  }
  return EmbeddingSet(spec.dim, LabelTable(std::move(names)), std::move(ids), std::move(coords));
}

std::vector<std::vector<double>> separated_means(std::size_t num_classes, std::size_t dim,
                                                 double separation, std::uint64_t seed) {
  if (num_classes > dim) {
    throw Error(Errc::configuration, "separated means need dim >= num_classes");
  }
  Rng rng(seed);
  std::vector<Vector> frame;
  while (frame.size() < num_classes) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.normal();
    // Modified Gram-Schmidt, twice for stability.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : frame) v -= v.dot(q) * q;
    }
    const double norm = v.norm();
    if (norm > 1e-8) frame.push_back(v / norm);
  }
  const double scale = separation / std::sqrt(2.0);
  std::vector<std::vector<double>> means;
  for (const auto& q : frame) {
    std::vector<double> m(dim);
    for (std::size_t j = 0; j < dim; ++j) m[j] = scale * q[static_cast<Eigen::Index>(j)];
    means.push_back(std::move(m));
  }
  return means;
}

}  // namespace embattr
