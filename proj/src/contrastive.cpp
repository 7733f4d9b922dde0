#include "embattr/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "embattr/error.hpp"

namespace embattr {

namespace {

constexpr double kMinNorm = 1e-12;
constexpr double kUnitTolerance = 1e-9;

void check_temperature(Temperature tau) {
  if (!(tau.value > 0.0) || !std::isfinite(tau.value)) {
    throw Error(Errc::configuration, "temperature must be positive and finite");
  }
}

// Loss plus the dL/ds coefficients C (N x N), where s_ij = z_i.z_j / tau.
struct Forward {
  double loss;
  Matrix coeff;
  Matrix gram;
};

Forward forward(const LabeledBatch& batch, double tau, bool want_coeff) {
  batch.validate();
  const auto n = batch.z.rows();
  const Matrix gram = batch.z * batch.z.transpose();

  std::vector<Eigen::Index> positives(static_cast<std::size_t>(n), 0);
  Eigen::Index anchors = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && batch.labels[j] == batch.labels[i]) ++positives[i];
    }
    if (positives[i] > 0) ++anchors;
  }
  if (anchors == 0) {
    throw Error(Errc::no_positive_pairs, "no anchor in the batch has a positive partner");
  }

  Forward out{0.0, Matrix(), gram};
  if (want_coeff) out.coeff = Matrix::Zero(n, n);
  std::vector<double> logits(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (positives[i] == 0) continue;
    Eigen::Index argmax = i == 0 ? 1 : 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      logits[j] = gram(i, j) / tau;
      if (logits[j] > logits[argmax]) argmax = j;
    }
    const double max_logit = logits[argmax];
    // log sum_a exp(s_a - max) = log1p(sum over a != argmax), which keeps
    // full relative precision when one term dominates and the loss is tiny.
    double rest = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && j != argmax) rest += std::exp(logits[j] - max_logit);
    }
    const double log_sum = std::log1p(rest);

    const double inv_pos = 1.0 / static_cast<double>(positives[i]);
    double positive_sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && batch.labels[j] == batch.labels[i]) {
        positive_sum += (logits[j] - max_logit) - log_sum;
      }
    }
    out.loss -= inv_pos * positive_sum;

    if (want_coeff) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double prob = std::exp(logits[j] - max_logit - log_sum);
        const double target = batch.labels[j] == batch.labels[i] ? inv_pos : 0.0;
        out.coeff(i, j) = prob - target;
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(anchors);
  out.loss *= scale;
  if (want_coeff) out.coeff *= scale;
  return out;
}

}  // namespace

void LabeledBatch::validate() const {
  if (z.rows() < 2) throw Error(Errc::validation, "batch needs at least two rows");
  if (z.cols() < 1) throw Error(Errc::validation, "batch rows must have positive dimension");
  if (static_cast<std::size_t>(z.rows()) != labels.size()) {
    throw Error(Errc::dimension, "batch has " + std::to_string(z.rows()) + " rows but " +
                                     std::to_string(labels.size()) + " labels");
  }
  if (!z.allFinite()) throw Error(Errc::non_finite, "batch contains non-finite entries");
  if (normalized) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      if (std::abs(z.row(i).norm() - 1.0) > kUnitTolerance) {
        throw Error(Errc::validation, "row " + std::to_string(i) + " is flagged normalized but is not unit length");
      }
    }
  }
}

Matrix normalize_rows(const Matrix& raw) {
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double norm = raw.row(i).norm();
    if (!(norm > kMinNorm)) {
      throw Error(Errc::degenerate_vector, "row " + std::to_string(i) + " has zero norm");
    }
    out.row(i) = raw.row(i) / norm;
  }
  return out;
}

LabeledBatch l2_normalize(const LabeledBatch& batch) {
  return LabeledBatch{normalize_rows(batch.z), batch.labels, true};
}

Matrix normalize_rows_backward(const Matrix& raw, const Matrix& grad_unit) {
  if (raw.rows() != grad_unit.rows() || raw.cols() != grad_unit.cols()) {
    throw Error(Errc::dimension, "gradient shape does not match input shape");
  }
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double norm = raw.row(i).norm();
    if (!(norm > kMinNorm)) {
      throw Error(Errc::degenerate_vector, "row " + std::to_string(i) + " has zero norm");
    }
    const auto unit = raw.row(i) / norm;
    const double radial = grad_unit.row(i).dot(unit);
    out.row(i) = (grad_unit.row(i) - radial * unit) / norm;
  }
  return out;
}

double supcon_loss(const LabeledBatch& batch, Temperature tau) {
  check_temperature(tau);
  return forward(batch, tau.value, false).loss;
}

SupConResult supcon_loss_and_grad(const LabeledBatch& batch, Temperature tau) {
  check_temperature(tau);
  auto fwd = forward(batch, tau.value, true);
  // s_ij depends on z_i and z_j, so C contributes through both its rows and columns.
  const Matrix sym = fwd.coeff + fwd.coeff.transpose();
  SupConResult out;
  out.loss = fwd.loss;
  out.grad_z = sym * batch.z / tau.value;
  if (tau.learnable) {
    out.grad_tau = -fwd.coeff.cwiseProduct(fwd.gram).sum() / (tau.value * tau.value);
  }
  return out;
}

Matrix supcon_grad(const LabeledBatch& batch, Temperature tau) {
  return supcon_loss_and_grad(batch, tau).grad_z;
}

}  // namespace embattr
