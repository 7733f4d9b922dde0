#pragma once

// Supervised contrastive loss over a batch of latent vectors.
//
// For anchor i, P(i) holds the other batch members sharing its label and A(i)
// every member except i itself. With s_ij = z_i.z_j / tau:
//
//   L = -(1/N') sum_i (1/|P(i)|) sum_{p in P(i)} log( exp(s_ip) / sum_{a in A(i)} exp(s_ia) )
//
// Anchors with an empty P(i) are skipped and N' counts the anchors that remain.

#include <optional>
#include <vector>

#include "embattr/embedding_store.hpp"

namespace embattr {

struct LabeledBatch {
  Matrix z;  ///< N x d, one latent vector per row
  std::vector<LabelId> labels;
  /// Set by l2_normalize. When set, validate() also checks unit row norms.
  bool normalized = false;

  void validate() const;
};

struct Temperature {
  double value = 0.07;
  bool learnable = false;
};

/// Scales every row to unit length. Throws Errc::degenerate_vector naming
/// the first row whose norm is at most 1e-12.
LabeledBatch l2_normalize(const LabeledBatch& batch);

/// Row-wise unit scaling of a raw matrix; same contract as l2_normalize.
Matrix normalize_rows(const Matrix& raw);

/// Pulls a gradient with respect to normalize_rows(raw) back to raw:
/// row i becomes (g_i - (g_i.u_i) u_i) / |raw_i| with u_i = raw_i / |raw_i|.
Matrix normalize_rows_backward(const Matrix& raw, const Matrix& grad_unit);

double supcon_loss(const LabeledBatch& batch, Temperature tau);

struct SupConResult {
  double loss = 0.0;
  Matrix grad_z;                 ///< dL/dz, N x d
  std::optional<double> grad_tau;  ///< dL/dtau, only for a learnable temperature
};

/// Loss together with its analytic gradient. The gradient treats the rows of
/// z as free variables; normalize_rows_backward composes it with the unit
/// scaling.
SupConResult supcon_loss_and_grad(const LabeledBatch& batch, Temperature tau);

Matrix supcon_grad(const LabeledBatch& batch, Temperature tau);

}  // namespace embattr
