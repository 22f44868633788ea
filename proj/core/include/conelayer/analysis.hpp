#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "conelayer/eigensolve.hpp"
#include "conelayer/mesh.hpp"

namespace conelayer {

// Truncation and discretization control for converged layer solves.  An
// eigenvalue is accepted when doubling s_max moves it less than smax_tol and
// one nested refinement moves it less than refine_tol; the reported value is
// the order-4 Richardson extrapolation of the two mesh levels.
struct ConvergencePolicy {
  double smax_tol = 1e-6;
  double refine_tol = 1e-5;
  int max_doublings = 6;
  bool do_refine = true;
  // Initial span guess: bound states decay like exp(-sqrt(1-lambda) s); the
  // truncation starts at span_factor times the estimated extent for
  // lambda = span_lambda with a tail safety factor.
  double span_lambda = 0.9;
  double tail_safety = 3.0;
  double span_factor = 3.0;
  std::optional<double> fixed_smax;  // bypasses the doubling loop
};

struct LayerResult {
  Aperture aperture;
  int m = 0;
  Mesh mesh;               // final mesh (refined when do_refine)
  AssembledSystem system;  // on the final mesh
  Spectrum spectrum;       // on the final mesh
  double s_max = 0.0;
  int doublings = 0;
  std::vector<double> extrapolated;  // Richardson values, empty w/o refine
  std::vector<double> smax_delta;    // |lambda(2s) - lambda(s)| per branch
  std::vector<double> refine_delta;  // |lambda_fine - lambda_coarse|
  bool smax_converged = false;
  bool refine_checked = false;

  // Best available value for branch j (extrapolated when present).
  double lambda(int j) const;
  int count() const { return static_cast<int>(spectrum.values.size()); }
};

LayerResult solve_layer(const Aperture& ap, int m, const EigenSolveParams& ep,
                        const MeshParams& mp, const ConvergencePolicy& policy);

struct SweepEntry {
  double theta_rad = 0.0;
  double beta_deg = 0.0;
  bool ok = false;
  std::string error;
  std::vector<double> lambdas;
  std::vector<double> smax_delta;
  bool smax_converged = false;
  double s_max = 0.0;
  int n_free = 0;
  double min_gap = 0.0;  // between consecutive recorded eigenvalues
};

struct SweepResult {
  std::vector<SweepEntry> entries;  // ascending theta
  int branch_count = 0;
  // lambda of branch j (0-based) at entry i; NaN where absent.
  double branch(int i, int j) const;
  // max over branches of lambda(theta_{i+1}) - lambda(theta_i); negative
  // values mean every branch decreases as theta grows.
  double max_branch_increase() const;
  double min_gap() const;  // over all entries with >= 2 eigenvalues
};

// Per-angle converged solves over a sorted angle grid.  Worker count is
// capped by the CONELAYER_THREADS environment variable when set.  Per-angle
// failures are recorded and the sweep continues.
SweepResult sweep(const std::vector<Aperture>& angles, int j_max,
                  const EigenSolveParams& ep, const MeshParams& mp,
                  const ConvergencePolicy& policy, int max_threads = 0);

struct DerivativeEstimate {
  double theta = 0.0;
  int branch = 0;  // 1-based
  double fd = 0.0;
  double fd_step_h = 0.0;   // plain central difference at step h
  double fd_step_h2 = 0.0;  // at step h/2; fd is their Richardson combination
  double step = 0.0;
  double fh = 0.0;
  bool fh_converged = false;
  // Feynman-Hellmann term partial sums at the three axis-grading levels:
  // terms[t][level], t = 0..2.
  double fh_terms[3][3] = {};
  double discrepancy = 0.0;  // |fd - fh| / max(|fd|, |fh|)
};

// Central difference with one Richardson step over h, h/2 applied to an
// arbitrary eigenvalue curve (testable with analytic stand-ins).
DerivativeEstimate fd_derivative(const std::function<double(double)>& f,
                                 double theta, double h);

// Derivative of branch j (1-based) by finite differences of converged layer
// solves.  Throws when a branch crossing is detected inside [theta-h,
// theta+h] (the ordered branch is then not the analytic one).
DerivativeEstimate eigenvalue_derivative_fd(const Aperture& ap, int j,
                                            double h, const EigenSolveParams&,
                                            const MeshParams&,
                                            const ConvergencePolicy&);

// Feynman-Hellmann derivative of branch j evaluated from a converged
// eigenpair: the flat-measure representative psi~ = r^(1/2) psi enters a
// three-term integral whose third term carries cot(2 theta) / (2 r^2).  Each
// term is quadratured with three levels of grading toward the axis so the
// individual (marginally singular) terms stay observable; the returned value
// is the finest-level total and fh_converged reports the Cauchy verdict
// |I3 - I2| < 10 |I2 - I1| on the third term.
DerivativeEstimate eigenvalue_derivative_fh(const LayerResult& result, int j);

struct CylinderBound {
  double theta = 0.0;
  double lambda_bar = 0.0;
  double R = 0.0;  // cylinder radius, in (0, pi)
  double L = 0.0;  // axial length (pi - R sin theta) / cos theta
  int N = 0;       // guaranteed count of eigenvalues below lambda_bar
};

// Lower bound on the eigenvalue count below lambda_bar from a cylinder
// inscribed along the axis with one lid at the inner tip: maximizes
// N(R) = floor((L/pi) sqrt(lambda_bar - lambda0 pi^2 / R^2)) over R.
CylinderBound cylinder_count_bound(const Aperture& ap, double lambda_bar);

int count_below(const Spectrum& spectrum, double lambda_bar);

struct NodalData {
  std::vector<std::vector<Point2>> polylines;  // chained zero level set
  int sign_domains = 0;
  std::vector<double> midline_s;  // crossings of u = pi/2, ascending s
};

// Zero level set and sign-domain count of a P2 field given by node values.
// Each element is subdivided into 16 affine sub-triangles with linear
// interpolation; sign domains are counted by union-find over sub-triangles
// of uniform sign.  Fields with max|psi| < 1e-12 are rejected.
NodalData nodal_extract(const Mesh& mesh, const Eigen::VectorXd& node_values);

// Level-set polylines of a P2 field at an arbitrary level (the c = 0 case is
// what nodal_extract uses); shared with the contour plots.
std::vector<std::vector<Point2>> level_set(const Mesh& mesh,
                                           const Eigen::VectorXd& node_values,
                                           double level);

struct NodeSpacingReport {
  std::vector<double> spacings;  // consecutive differences of midline_s
  bool strictly_increasing = false;
};

NodeSpacingReport node_spacing_report(const NodalData& nodal);

struct Profile {
  std::vector<double> z;         // uniform grid
  std::vector<double> psi2_max;  // transverse envelope max of |psi|^2
  std::vector<double> maxima_z;  // locations of local envelope maxima
};

// Envelope of |psi|^2 against the axial coordinate z; the caller keeps all
// modes under one normalization (B-normalized eigenvectors already are).
Profile profile_report(const Mesh& mesh, const Eigen::VectorXd& node_values,
                       const Aperture& ap, int n_bins = 400);

// Fraction of the squared B-norm of the field within z <= z_cut.
double bnorm_share_within_z(const Mesh& mesh, const Aperture& ap,
                            const Eigen::VectorXd& node_values, double z_cut);

// Smallest Ritz value of the m-th partial wave on a fixed truncated domain
// (no convergence loop); for m != 0 this certifies emptiness below the
// threshold since every discretization step only raises it.
double smallest_ritz(const Aperture& ap, int m, const MeshParams& mp,
                     double s_max);

}  // namespace conelayer
