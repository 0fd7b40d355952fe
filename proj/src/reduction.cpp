#include "mhdshred/reduction.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <iomanip>
#include <sstream>

namespace mhdshred::reduction {

Vector SingularSpectrum::discarded_energy() const {
  const Eigen::Index n = sigma.size();
  // Suffix sums from the small end keep the tail accurate.
  Vector tail(n + 1);
  tail[n] = 0.0;
  for (Eigen::Index k = n - 1; k >= 0; --k) tail[k] = tail[k + 1] + sigma[k] * sigma[k];
  const double total = tail[0];
  if (total > 0.0) tail /= total;
  return tail;
}

namespace {

template <class ChooseRank>
SvdResult svd_impl(const Matrix& X, ChooseRank choose) {
  if (X.size() == 0) fail(ErrorKind::ShapeMismatch, "truncated_svd: empty matrix");
  const Eigen::Index m = X.cols();

  const Matrix gram = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success)
    fail(ErrorKind::LinearSolver, "truncated_svd: Gram eigen-decomposition failed");

  // Eigen returns ascending eigenvalues.
  const Vector lambda = eig.eigenvalues().reverse();
  const Matrix vecs = eig.eigenvectors().rowwise().reverse();
  const double floor = kGramFloor * std::max(lambda[0], 0.0);

  SvdResult out;
  out.spectrum.sigma = Vector::Zero(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    if (lambda[k] > floor && lambda[k] > 0.0) {
      out.spectrum.sigma[k] = std::sqrt(lambda[k]);
      ++out.numerical_rank;
    }
  }
  if (out.numerical_rank == 0) fail(ErrorKind::InvalidArgument, "truncated_svd: zero matrix");
  const int rank = choose(out.spectrum);
  out.requested_rank = rank;
  const int r = std::min(rank, out.numerical_rank);
  out.rank_clipped = r < rank;

  Matrix U = X * vecs.leftCols(r);
  for (int k = 0; k < r; ++k) U.col(k) /= out.spectrum.sigma[k];
  Eigen::HouseholderQR<Matrix> qr(U);
  Matrix Q = qr.householderQ() * Matrix::Identity(U.rows(), r);
  const Matrix R = qr.matrixQR().topLeftCorner(r, r);
  for (int k = 0; k < r; ++k)
    if (R(k, k) < 0.0) Q.col(k) = -Q.col(k);

  out.V = vecs.leftCols(r);
  for (int k = 0; k < r; ++k) {
    Eigen::Index imax;
    Q.col(k).cwiseAbs().maxCoeff(&imax);
    if (Q(imax, k) < 0.0) {
      Q.col(k) = -Q.col(k);
      out.V.col(k) = -out.V.col(k);
    }
  }
  out.U = std::move(Q);
  return out;
}

}  // namespace

SvdResult truncated_svd(const Matrix& X, int rank) {
  if (rank < 1 || rank > std::min(X.rows(), X.cols()))
    fail(ErrorKind::InvalidArgument, "truncated_svd: rank " + std::to_string(rank) +
                                         " outside [1, min(rows, cols)]");
  return svd_impl(X, [rank](const SingularSpectrum&) { return rank; });
}

SvdResult truncated_svd_by_energy(const Matrix& X, double energy_threshold, int r_min) {
  return svd_impl(X, [&](const SingularSpectrum& s) { return select_rank(s, energy_threshold, r_min); });
}

int select_rank(const SingularSpectrum& spectrum, double energy_threshold, int r_min) {
  if (!(energy_threshold > 0.0 && energy_threshold < 1.0))
    fail(ErrorKind::InvalidArgument, "energy threshold must lie in (0, 1)");
  const Vector e = spectrum.discarded_energy();
  const int n = static_cast<int>(spectrum.sigma.size());
  int r = n;
  for (int k = 1; k <= n; ++k)
    if (e[k] < energy_threshold) {
      r = k;
      break;
    }
  return std::min(std::max(r, r_min), n);
}

Matrix project(const ReducedBasis& basis, const Matrix& X) {
  if (X.rows() != basis.U.rows())
    fail(ErrorKind::ShapeMismatch, "project: basis has " + std::to_string(basis.U.rows()) +
                                       " rows, data has " + std::to_string(X.rows()));
  return basis.U.transpose() * X;
}

Matrix reconstruct(const ReducedBasis& basis, const Matrix& V) {
  if (V.rows() != basis.U.cols())
    fail(ErrorKind::ShapeMismatch, "reconstruct: basis rank " + std::to_string(basis.U.cols()) +
                                       " vs coefficient rows " + std::to_string(V.rows()));
  return basis.U * V;
}

double orthonormality_error(const Matrix& U) {
  return (U.transpose() * U - Matrix::Identity(U.cols(), U.cols())).cwiseAbs().maxCoeff();
}

Vector projection_residual(const ReducedBasis& basis, const Matrix& X) {
  return (X - reconstruct(basis, project(basis, X))).colwise().norm().transpose();
}

std::string spectrum_csv(const SingularSpectrum& spectrum) {
  const Vector e = spectrum.discarded_energy();
  std::ostringstream out;
  out << "k,sigma,discarded_energy\n" << std::setprecision(17);
  for (Eigen::Index k = 0; k < spectrum.sigma.size(); ++k)
    out << k + 1 << ',' << spectrum.sigma[k] << ',' << e[k + 1] << '\n';
  return out.str();
}

}  // namespace mhdshred::reduction
