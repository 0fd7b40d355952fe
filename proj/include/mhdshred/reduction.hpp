#pragma once

#include "mhdshred/common.hpp"

#include <string>

/// Truncated SVD by the method of snapshots, rank selection and projection.
namespace mhdshred::reduction {

/// Singular values in descending order; zeros past the numerical rank.
struct SingularSpectrum {
  Vector sigma;

  /// e(r) = sum_{k>r} sigma_k^2 / sum_k sigma_k^2 for r = 0 .. size.
  Vector discarded_energy() const;
};

struct SvdResult {
  Matrix U;               // rows x achieved rank, orthonormal columns
  SingularSpectrum spectrum;
  Matrix V;               // cols x achieved rank, right singular vectors
  int requested_rank = 0;
  int numerical_rank = 0;
  /// Set when the request exceeded the numerical rank and was clipped.
  bool rank_clipped = false;

  int rank() const { return static_cast<int>(U.cols()); }
};

/// Eigenvalues of the Gram matrix below this fraction of the largest are
/// treated as zero.
inline constexpr double kGramFloor = 1e-14;

/// Eigen-decomposition of X^T X; sigma_k = sqrt(lambda_k), U_k = X v_k / sigma_k,
/// followed by a QR pass that restores orthonormality lost to round-off.
/// Columns are sign-fixed so the entry of largest magnitude is positive.
SvdResult truncated_svd(const Matrix& X, int rank);
/// Same decomposition with the rank picked by select_rank on its spectrum.
SvdResult truncated_svd_by_energy(const Matrix& X, double energy_threshold, int r_min = 1);

/// Smallest r with e(r) < threshold, raised to r_min and capped at the
/// spectrum length.
int select_rank(const SingularSpectrum& spectrum, double energy_threshold, int r_min = 1);

struct ReducedBasis {
  std::string label;
  Matrix U;

  int rank() const { return static_cast<int>(U.cols()); }
};

/// V = U^T X.
Matrix project(const ReducedBasis& basis, const Matrix& X);
/// X_hat = U V.
Matrix reconstruct(const ReducedBasis& basis, const Matrix& V);

/// max |U^T U - I|.
double orthonormality_error(const Matrix& U);

/// Per-column residual norm |x - U U^T x|.
Vector projection_residual(const ReducedBasis& basis, const Matrix& X);

/// CSV rows "k,sigma,discarded_energy" for k = 1 .. size.
std::string spectrum_csv(const SingularSpectrum& spectrum);

}  // namespace mhdshred::reduction
