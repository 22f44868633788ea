#include "conelayer/eigensolve.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "conelayer/oracles.hpp"

namespace conelayer {

namespace {

constexpr uint64_t kStartSeed = 0x5EED;

double splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return 2.0 * (static_cast<double>(z >> 11) * 0x1.0p-53) - 1.0;
}

Eigen::VectorXd seeded_vector(int n, uint64_t seed) {
  Eigen::VectorXd v(n);
  uint64_t st = seed;
  for (int i = 0; i < n; ++i) v[i] = splitmix64(st);
  return v;
}

void fix_sign(Eigen::Ref<Eigen::VectorXd> x) {
  int idx = 0;
  double best = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    if (std::abs(x[i]) > best) {
      best = std::abs(x[i]);
      idx = i;
    }
  }
  if (x[idx] < 0) x = -x;
}

// Factorization of (A - sigma B) with an LDLT first attempt and a pivoted LU
// fallback for indefinite or near-singular shifts.
class ShiftSolver {
 public:
  bool factor_ldlt(const Eigen::SparseMatrix<double>& upper) {
    ldlt_.compute(upper);
    if (ldlt_.info() != Eigen::Success) return false;
    auto D = ldlt_.vectorD();
    double dmax = D.cwiseAbs().maxCoeff();
    if (!(dmax > 0) || !std::isfinite(dmax)) return false;
    negative_pivots_ = 0;
    for (int i = 0; i < D.size(); ++i) {
      if (!std::isfinite(D[i]) || std::abs(D[i]) < 1e-15 * dmax) return false;
      if (D[i] < 0) ++negative_pivots_;
    }
    use_lu_ = false;
    // Probe the factorization quality: LDLT without pivoting can go
    // inaccurate on strongly indefinite shifts.
    Eigen::VectorXd b = Eigen::VectorXd::Ones(upper.rows());
    Eigen::VectorXd x = ldlt_.solve(b);
    Eigen::VectorXd r = upper.selfadjointView<Eigen::Upper>() * x - b;
    double xn = x.norm();
    if (!std::isfinite(xn)) return false;
    double denom = b.norm() + dmax * xn;
    if (!(r.norm() <= 1e-7 * denom)) return false;
    return true;
  }

  bool factor_lu(const Eigen::SparseMatrix<double>& full) {
    lu_.compute(full);
    if (lu_.info() != Eigen::Success) return false;
    use_lu_ = true;
    return true;
  }

  // Number of eigenvalues of the factored matrix below zero (Sylvester),
  // i.e. pencil eigenvalues below sigma; -1 when unknown (LU path).
  int negative_pivots() const { return use_lu_ ? -1 : negative_pivots_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (use_lu_) return lu_.solve(rhs);
    return ldlt_.solve(rhs);
  }

 private:
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper> ldlt_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
  bool use_lu_ = false;
  int negative_pivots_ = 0;
};

struct Candidate {
  double lambda;
  Eigen::VectorXd x;
  double residual;
};

void cluster_scan(Spectrum& out) {
  for (int i = 0; i + 1 < static_cast<int>(out.values.size()); ++i) {
    if (out.values[i + 1] - out.values[i] < 1e-10) {
      int j = i;
      while (j + 1 < static_cast<int>(out.values.size()) &&
             out.values[j + 1] - out.values[j] < 1e-10)
        ++j;
      out.degenerate_clusters.emplace_back(i, j);
      i = j;
    }
  }
}

void finalize_spectrum(const AssembledSystem& sys, const EigenSolveParams& p,
                       std::vector<Candidate>& cands, Spectrum& out) {
  std::sort(cands.begin(), cands.end(),
            [](const Candidate& a, const Candidate& b) {
              return a.lambda < b.lambda;
            });
  int below = 0;
  for (const auto& c : cands)
    if (c.lambda < p.threshold) ++below;
  int n_keep = std::min(p.k, below);
  out.values.clear();
  out.residuals.clear();
  out.above_threshold.clear();
  out.threshold_ambiguous.clear();
  out.degenerate_clusters.clear();
  out.vectors.resize(sys.n_free, n_keep);
  int kept = 0;
  for (const auto& c : cands) {
    if (c.lambda < p.threshold && kept < n_keep) {
      out.values.push_back(c.lambda);
      out.residuals.push_back(c.residual);
      out.vectors.col(kept) = c.x;
      fix_sign(out.vectors.col(kept));
      ++kept;
    } else if (c.lambda >= p.threshold &&
               static_cast<int>(out.above_threshold.size()) < p.k + 5) {
      if (c.lambda <= p.threshold + p.tol)
        out.threshold_ambiguous.push_back(
            static_cast<int>(out.above_threshold.size()));
      out.above_threshold.push_back(c.lambda);
    }
  }
  cluster_scan(out);
}

Spectrum dense_path(const AssembledSystem& sys, const EigenSolveParams& p) {
  Spectrum full = solve_dense(sys, 1e300);
  std::vector<Candidate> cands;
  for (size_t i = 0; i < full.values.size(); ++i) {
    if (static_cast<int>(cands.size()) >= p.k + 8 &&
        full.values[i] >= p.threshold)
      break;
    cands.push_back({full.values[i], full.vectors.col(i), full.residuals[i]});
  }
  Spectrum out;
  out.sigma_used = p.sigma.value_or(0.5 * oracles::lambda0());
  out.converged = true;
  finalize_spectrum(sys, p, cands, out);
  return out;
}

}  // namespace

Spectrum solve_dense(const AssembledSystem& sys, double threshold) {
  const int n = sys.n_free;
  if (n > 3000)
    throw std::invalid_argument("solve_dense: dimension cap 3000 exceeded");
  if (n < 1) throw std::invalid_argument("solve_dense: empty system");
  Eigen::MatrixXd A = sys.A.dense();
  Eigen::MatrixXd B = sys.B.dense();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
      A, B, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success)
    throw std::runtime_error("solve_dense: reduction failed (B not SPD?)");

  Spectrum out;
  out.sigma_used = 0.0;
  out.converged = true;
  int below = 0;
  for (int i = 0; i < n; ++i)
    if (ges.eigenvalues()[i] < threshold) ++below;
  out.vectors.resize(n, below);
  for (int i = 0; i < n; ++i) {
    double lam = ges.eigenvalues()[i];
    Eigen::VectorXd x = ges.eigenvectors().col(i);
    // Eigen returns x^T B x = 1 already; normalize defensively anyway.
    double bn = std::sqrt(x.dot(sys.B.apply(x)));
    x /= bn;
    double res = (sys.A.apply(x) - lam * sys.B.apply(x)).norm();
    if (lam < threshold) {
      out.values.push_back(lam);
      out.residuals.push_back(res);
      int col = static_cast<int>(out.values.size()) - 1;
      out.vectors.col(col) = x;
      fix_sign(out.vectors.col(col));
    } else {
      out.above_threshold.push_back(lam);
    }
  }
  cluster_scan(out);
  return out;
}

Spectrum solve_lowest(const AssembledSystem& sys, const EigenSolveParams& p) {
  const int n = sys.n_free;
  if (n < 1) throw std::invalid_argument("solve_lowest: empty system");
  const int k = std::max(1, p.k);
  if (!(p.tol > 0)) throw std::invalid_argument("solve_lowest: tol <= 0");

  if (n <= std::max(3 * k + 20, 64)) return dense_path(sys, p);

  double sigma = p.sigma.value_or(0.5 * oracles::lambda0());
  if (!(sigma < p.threshold))
    throw std::invalid_argument("solve_lowest: sigma must be < threshold");

  Spectrum out;
  ShiftSolver solver;
  double sigma_used = sigma;
  bool factored = false;
  for (int attempt = 0; attempt < 3 && !factored; ++attempt) {
    Eigen::SparseMatrix<double> C =
        (sys.A.upper_col() - sigma_used * sys.B.upper_col()).pruned();
    factored = solver.factor_ldlt(C);
    if (!factored) {
      out.factorization_retries++;
      // Keep the retry inside the gap below the threshold when the shift
      // was placed near it; otherwise step down on the absolute scale.
      double gap = p.threshold - sigma_used;
      if (std::isfinite(p.threshold) && gap < 0.05 * (1.0 + std::abs(sigma_used)))
        sigma_used = p.threshold - 1.7 * gap;
      else
        sigma_used -= 0.1 * (1.0 + std::abs(sigma_used));
    }
  }
  if (!factored) {
    Eigen::SparseMatrix<double> Cfull =
        (sys.A.full() - sigma_used * sys.B.full()).pruned();
    if (!solver.factor_lu(Cfull))
      throw std::runtime_error(
          "solve_lowest: factorization failed after shift retries");
  }
  out.sigma_used = sigma_used;
  const int n_below_sigma = solver.negative_pivots();

  int total_ops = 0;
  auto op = [&](const Eigen::VectorXd& x) {
    ++total_ops;
    return solver.solve(sys.B.apply(x));
  };

  const int nev = std::min(k + 5, n - 1);
  // Near-threshold clusters (truncated-continuum spacing ~ (pi/s_max)^2)
  // need a roomy basis to resolve; restarts preserve progress.
  const int mmax = std::min(n - 1, std::max(4 * k + 48, 96));
  const int keep_max = std::min(2 * k + 16, mmax - 8);

  Eigen::MatrixXd V(n, mmax + 1);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(mmax + 1, mmax + 1);

  {
    Eigen::VectorXd v0 = seeded_vector(n, kStartSeed);
    double bn = std::sqrt(v0.dot(sys.B.apply(v0)));
    V.col(0) = v0 / bn;
  }

  // Invariant: columns [0, processed) have complete T columns; V.col(processed)
  // is the next B-normalized direction; beta_last = T(processed, processed-1).
  int processed = 0;
  double beta_last = 0.0;
  std::vector<Candidate> accepted;
  bool budget_hit = false;
  bool done = false;

  // Applies op to column j, orthogonalizes twice against the whole basis,
  // records the projection coefficients in T and appends the new direction.
  auto process_column = [&](int j) {
    Eigen::VectorXd w = op(V.col(j));
    Eigen::VectorXd coeff = Eigen::VectorXd::Zero(j + 1);
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd Bw = sys.B.apply(w);
      Eigen::VectorXd c = V.leftCols(j + 1).transpose() * Bw;
      w.noalias() -= V.leftCols(j + 1) * c;
      coeff += c;
    }
    for (int i = 0; i <= j; ++i) {
      T(i, j) = coeff[i];
      T(j, i) = coeff[i];
    }
    double beta = std::sqrt(std::max(0.0, w.dot(sys.B.apply(w))));
    if (!(beta > 1e-13)) {
      // Invariant subspace: continue with a fresh deterministic direction.
      w = seeded_vector(n, kStartSeed ^ (0x9E37ULL + j));
      for (int pass = 0; pass < 2; ++pass) {
        Eigen::VectorXd Bw = sys.B.apply(w);
        w.noalias() -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * Bw);
      }
      beta = std::sqrt(std::max(0.0, w.dot(sys.B.apply(w))));
      if (!(beta > 0)) throw std::runtime_error("solve_lowest: basis collapse");
      T(j + 1, j) = T(j, j + 1) = 0.0;
      beta_last = 0.0;
    } else {
      T(j + 1, j) = T(j, j + 1) = beta;
      beta_last = beta;
    }
    V.col(j + 1) = w / beta;
  };

  // Assembles the Ritz vector, measures the true residual, polishes it with
  // inverse iteration if needed, and accepts at the tolerance.
  auto try_accept = [&](double lambda, const Eigen::VectorXd& y) {
    Eigen::VectorXd x = V.leftCols(processed) * y;
    double bn = std::sqrt(x.dot(sys.B.apply(x)));
    if (!(bn > 0)) return false;
    x /= bn;
    double lam = lambda;
    Eigen::VectorXd r = sys.A.apply(x) - lam * sys.B.apply(x);
    for (int polish = 0; polish < 2 && r.norm() > p.tol; ++polish) {
      ++total_ops;
      Eigen::VectorXd d = solver.solve(r);
      Eigen::VectorXd x2 = x - d;
      double bn2 = std::sqrt(x2.dot(sys.B.apply(x2)));
      if (!(bn2 > 0)) break;
      x2 /= bn2;
      double lam2 = x2.dot(sys.A.apply(x2));
      Eigen::VectorXd r2 = sys.A.apply(x2) - lam2 * sys.B.apply(x2);
      if (r2.norm() >= r.norm()) break;
      x = x2;
      lam = lam2;
      r = r2;
    }
    if (r.norm() <= p.tol) {
      accepted.push_back({lam, x, r.norm()});
      return true;
    }
    return false;
  };

  while (!done && !budget_hit) {
    while (processed < mmax) {
      if (total_ops >= p.max_iter) {
        budget_hit = true;
        break;
      }
      process_column(processed);
      ++processed;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        T.topLeftCorner(processed, processed));
    const auto& theta = es.eigenvalues();  // ascending
    const auto& Y = es.eigenvectors();

    // With sigma below the spectrum the largest theta are the lowest
    // eigenvalues; accept only a consecutive prefix so nothing is skipped.
    accepted.clear();
    int below_found = 0;
    bool above_found = false;
    int taken = 0;
    for (int pos = processed - 1; pos >= 0 && taken < nev; --pos) {
      double th = theta[pos];
      if (!(th > 1e-14)) break;
      double est = std::abs(beta_last * Y(processed - 1, pos)) / (th * th);
      if (est > 1e3 * p.tol) break;
      double lambda = sigma_used + 1.0 / th;
      if (!try_accept(lambda, Y.col(pos))) break;
      ++taken;
      if (lambda < p.threshold)
        ++below_found;
      else {
        above_found = true;
        break;  // the below-threshold list is complete
      }
    }
    // Converged extremes below sigma, when the shift sits inside the
    // spectrum.  The LDLT inertia says exactly how many exist.
    int neg_accepted = 0;
    for (int pos = 0; pos < processed; ++pos) {
      double th = theta[pos];
      if (th >= -1e-14) break;
      if (n_below_sigma >= 0 && neg_accepted >= n_below_sigma) break;
      if (neg_accepted >= k) break;
      double est = std::abs(beta_last * Y(processed - 1, pos)) / (th * th);
      if (est > 1e3 * p.tol) break;
      double lambda = sigma_used + 1.0 / th;
      if (!try_accept(lambda, Y.col(pos))) break;
      ++neg_accepted;
      if (lambda < p.threshold) ++below_found;
    }

    // With the shift inside the spectrum the below-threshold list is only
    // complete once every eigenvalue under sigma is in hand (or k of them).
    bool negatives_done =
        n_below_sigma < 0 || neg_accepted >= std::min(k, n_below_sigma);
    done = below_found >= k || (above_found && negatives_done) ||
           processed >= n - 1;
    if (done || budget_hit) break;

    // Thick restart: keep the leading Ritz vectors plus the residual
    // direction; the next process_column rebuilds the arrow column of T.
    int keep = std::min(keep_max, processed - 2);
    Eigen::MatrixXd Ykeep(processed, keep);
    Eigen::VectorXd tkeep(keep);
    for (int i = 0; i < keep; ++i) {
      Ykeep.col(i) = Y.col(processed - 1 - i);
      tkeep[i] = theta[processed - 1 - i];
    }
    Eigen::MatrixXd Vnew = V.leftCols(processed) * Ykeep;
    V.leftCols(keep) = Vnew;
    V.col(keep) = V.col(processed);
    T.setZero();
    for (int i = 0; i < keep; ++i) T(i, i) = tkeep[i];
    processed = keep;
  }

  out.iterations = total_ops;
  out.converged = done;
  finalize_spectrum(sys, p, accepted, out);
  return out;
}

ResidualReport residual_report(const AssembledSystem& sys,
                               const Spectrum& spectrum) {
  ResidualReport rep;
  const int p = static_cast<int>(spectrum.values.size());
  rep.gram.resize(p, p);
  for (int i = 0; i < p; ++i) {
    Eigen::VectorXd x = spectrum.vectors.col(i);
    Eigen::VectorXd Bx = sys.B.apply(x);
    double res = (sys.A.apply(x) - spectrum.values[i] * Bx).norm();
    rep.residuals.push_back(res);
    rep.max_residual = std::max(rep.max_residual, res);
    for (int j = 0; j < p; ++j) {
      rep.gram(i, j) = spectrum.vectors.col(j).dot(Bx);
    }
  }
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      if (i == j)
        rep.max_gram_diag_error =
            std::max(rep.max_gram_diag_error, std::abs(rep.gram(i, j) - 1.0));
      else
        rep.max_gram_offdiag =
            std::max(rep.max_gram_offdiag, std::abs(rep.gram(i, j)));
    }
  }
  return rep;
}

}  // namespace conelayer
