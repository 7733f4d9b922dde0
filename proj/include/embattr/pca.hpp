#pragma once

#include <iosfwd>

#include "embattr/embedding_store.hpp"

namespace embattr {

struct Projection2D {
  Matrix coords;      ///< n x 2
  Vector mean;        ///< d
  Matrix components;  ///< 2 x d, orthonormal rows, descending variance
  double variance[2] = {0.0, 0.0};
  int iterations = 0;
  bool converged = false;
};

/// Projects mean-centred records onto their top two principal directions.
///
/// Two-vector subspace iteration on the covariance (applied implicitly as
/// X^T X v / n) from a fixed-seed Gaussian start, stopping once the subspace
/// moves by less than 1e-9 in Frobenius norm or after 10000 sweeps, followed
/// by a 2x2 Rayleigh-Ritz step to order the directions. Each direction's
/// largest-magnitude entry is made positive. Throws
/// Errc::degenerate_projection when the data spans fewer than two directions.
Projection2D pca2(const EmbeddingSet& set);

/// CSV with header "sample_id,label,x,y"; sample_id is the record position.
void write_pca_csv(const EmbeddingSet& set, const Projection2D& proj, std::ostream& out);

}  // namespace embattr
