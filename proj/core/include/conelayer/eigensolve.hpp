#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "conelayer/assembly.hpp"

namespace conelayer {

struct EigenSolveParams {
  int k = 7;                    // requested eigenpairs below the threshold
  std::optional<double> sigma;  // spectral shift; default 0.5 * lambda0
  double tol = 1e-9;            // residual tolerance ||Ax - lambda Bx||
  int max_iter = 600;           // budget of operator applications
  double threshold = 1.0;       // continuum threshold separating the lists
};

// Solution of A x = lambda B x for the smallest eigenvalues.  `values` holds
// the converged eigenvalues strictly below the threshold in ascending order;
// Ritz values at or above the threshold land in `above_threshold`.  The
// eigenvector columns are B-orthonormal over the free dofs.
struct Spectrum {
  std::vector<double> values;
  Eigen::MatrixXd vectors;
  std::vector<double> residuals;
  std::vector<double> above_threshold;
  std::vector<int> threshold_ambiguous;  // indices into above_threshold
                                         // within [threshold, threshold+tol]
  // Inclusive index ranges in `values` with gaps below 1e-10.
  std::vector<std::pair<int, int>> degenerate_clusters;
  int iterations = 0;
  int factorization_retries = 0;
  double sigma_used = 0.0;
  bool converged = true;
};

// Shift-invert Lanczos with B-inner products and full reorthogonalization,
// thick restarts, and a deterministic start vector (seed 0x5EED).  Small
// systems fall back to the dense path.  Factorization failures retry with a
// perturbed shift (three attempts), then a pivoted LU.
Spectrum solve_lowest(const AssembledSystem& sys, const EigenSolveParams& p);

// Dense oracle: full spectrum via reduction with a Cholesky factor of B.
// Free dimension capped at 3000.
Spectrum solve_dense(const AssembledSystem& sys,
                     double threshold = 1e300);

struct ResidualReport {
  std::vector<double> residuals;  // ||A x_i - lambda_i B x_i||, recomputed
  Eigen::MatrixXd gram;           // X^T B X
  double max_residual = 0.0;
  double max_gram_offdiag = 0.0;
  double max_gram_diag_error = 0.0;
};

// Recomputes residuals and B-orthogonality independently of the solver's
// internal estimates.
ResidualReport residual_report(const AssembledSystem& sys,
                               const Spectrum& spectrum);

}  // namespace conelayer
