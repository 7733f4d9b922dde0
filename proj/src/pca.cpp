#include "embattr/pca.hpp"

#include <cmath>
#include <ostream>

#include "embattr/error.hpp"
#include "embattr/random.hpp"
#include "embattr/records_io.hpp"

namespace embattr {

namespace {

constexpr double kTolerance = 1e-9;
constexpr int kMaxIterations = 10000;
constexpr std::uint64_t kStartSeed = 0x9e3779b97f4a7c15ULL;
constexpr double kRankRatio = 1e-10;

using Basis = Eigen::Matrix<double, Eigen::Dynamic, 2>;

Basis orthonormalize(const Basis& w) {
  Basis q = w;
  for (int pass = 0; pass < 2; ++pass) {
    q.col(0).normalize();
    q.col(1) -= q.col(0).dot(q.col(1)) * q.col(0);
    q.col(1).normalize();
  }
  return q;
}

}  // namespace

Projection2D pca2(const EmbeddingSet& set) {
  if (set.size() < 2) throw Error(Errc::degenerate_projection, "PCA needs at least two records");
  const Matrix raw = set.to_matrix();
  Projection2D out;
  out.mean = raw.colwise().mean().transpose();
  const Matrix centred = raw.rowwise() - out.mean.transpose();
  const double n = static_cast<double>(set.size());
  auto apply_cov = [&](const Basis& v) -> Basis { return centred.transpose() * (centred * v) / n; };

  const double total = centred.squaredNorm() / n;
  if (!(total > 0.0) || set.dim() < 2) {
    throw Error(Errc::degenerate_projection, "data has fewer than two nonzero principal directions");
  }

  Rng rng(kStartSeed);
  Basis q(static_cast<Eigen::Index>(set.dim()), 2);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.normal();
  q = orthonormalize(q);

  for (out.iterations = 1; out.iterations <= kMaxIterations; ++out.iterations) {
    Basis next = apply_cov(q);
    const double lead = next.col(0).norm();
    if (!(lead > 0.0)) break;
    // A second column with nothing left outside the first means rank < 2;
    // the Rayleigh-Ritz check below reports it.
    const Vector rest = next.col(1) - next.col(0).dot(next.col(1)) / (lead * lead) * next.col(0);
    if (rest.norm() <= kRankRatio * lead) break;
    next = orthonormalize(next);
    const double moved = (next - q * (q.transpose() * next)).norm();
    q = next;
    if (moved < kTolerance) {
      out.converged = true;
      break;
    }
  }

  const Eigen::Matrix2d ritz = q.transpose() * apply_cov(q);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(ritz);
  // Eigen sorts ascending.
  const double lambda1 = eig.eigenvalues()[1];
  const double lambda2 = eig.eigenvalues()[0];
  if (!(lambda1 > 0.0) || !(lambda2 > kRankRatio * lambda1)) {
    throw Error(Errc::degenerate_projection, "data has fewer than two nonzero principal directions");
  }
  Basis dirs(q.rows(), 2);
  dirs.col(0) = q * eig.eigenvectors().col(1);
  dirs.col(1) = q * eig.eigenvectors().col(0);
  for (int c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    dirs.col(c).cwiseAbs().maxCoeff(&arg);
    if (dirs(arg, c) < 0.0) dirs.col(c) = -dirs.col(c);
  }

  out.components = dirs.transpose();
  out.coords = centred * dirs;
  out.variance[0] = lambda1;
  out.variance[1] = lambda2;
  return out;
}

void write_pca_csv(const EmbeddingSet& set, const Projection2D& proj, std::ostream& out) {
  out << "sample_id,label,x,y\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << i << ',' << set.labels().name(set.label_id(i)) << ',' << format_number(proj.coords(r, 0))
        << ',' << format_number(proj.coords(r, 1)) << '\n';
  }
}

}  // namespace embattr
