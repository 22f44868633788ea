#include <cmath>
#include <stdexcept>

#include "conelayer/analysis.hpp"
#include "conelayer/oracles.hpp"
#include "doctest.h"

using namespace conelayer;

namespace {

MeshParams coarse_mesh() { return {0.45, 2.0, 15.0}; }

ConvergencePolicy fixed_policy(double s_max, bool refine = false) {
  ConvergencePolicy pol;
  pol.fixed_smax = s_max;
  pol.do_refine = refine;
  return pol;
}

}  // namespace

TEST_CASE("finite differences on an analytic curve") {
  auto f = [](double t) { return std::sin(t); };
  DerivativeEstimate est = fd_derivative(f, 1.0, 0.01);
  double exact = std::cos(1.0);
  CHECK(std::abs(est.fd - exact) < 1e-9);
  // plain central differences converge at order 2: errors shrink ~4x per
  // halving of the step
  double e1 = std::abs(est.fd_step_h - exact);
  double e2 = std::abs(est.fd_step_h2 - exact);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("cylinder counting bound") {
  // near-planar: the inscribed cylinder is too short for any guaranteed mode
  CylinderBound flat = cylinder_count_bound(Aperture::from_theta_deg(2.0), 0.99);
  CHECK(flat.N == 0);

  // sharp-cone case: value pinned by an independent grid scan (below)
  CylinderBound sharp =
      cylinder_count_bound(Aperture::from_theta_deg(87.5), 0.95);
  double l0 = oracles::lambda0();

  // brute-force oracle: same formula scanned on a fixed 10^4-point grid
  int n_oracle = 0;
  Aperture ap = Aperture::from_theta_deg(87.5);
  for (int i = 1; i < 10000; ++i) {
    double R = kPi * i / 10000.0;
    double L = (kPi - R * ap.sin_theta()) / ap.cos_theta();
    double rad = 0.95 - l0 * kPi * kPi / (R * R);
    if (L > 0 && rad > 0)
      n_oracle = std::max(
          n_oracle, static_cast<int>(std::floor(L / kPi * std::sqrt(rad))));
  }
  CHECK(n_oracle == 1);  // frozen from the scan
  CHECK(sharp.N == n_oracle);
  CHECK(sharp.R > 0.0);
  CHECK(sharp.R < kPi);
  // the reported triple satisfies the strict inequality
  CHECK(l0 * kPi * kPi / (sharp.R * sharp.R) +
            kPi * kPi * sharp.N * sharp.N / (sharp.L * sharp.L) <
        0.95);

  CHECK(cylinder_count_bound(Aperture::from_theta_deg(85.0), 0.9).N == 0);
  CHECK_THROWS_AS(cylinder_count_bound(ap, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(cylinder_count_bound(ap, 1.0), std::invalid_argument);
}

TEST_CASE("count_below") {
  Spectrum sp;
  CHECK(count_below(sp, 1.0) == 0);
  sp.values = {0.6, 0.7, 0.95};
  CHECK(count_below(sp, 1.0) == 3);
  CHECK(count_below(sp, 0.9) == 2);
  CHECK(count_below(sp, 0.6) == 0);
}

TEST_CASE("nodal extraction on synthetic fields") {
  Mesh mesh = build_rectangle_mesh(2.0, kPi, 10, 14,
                                   {BoundaryTag::Axis, BoundaryTag::Truncation,
                                    BoundaryTag::WallOuter,
                                    BoundaryTag::WallInner});
  // one sign change across u = pi/2
  Eigen::VectorXd v(mesh.node_count());
  for (int i = 0; i < mesh.node_count(); ++i)
    v[i] = std::sin(2.0 * mesh.nodes[i].b);
  NodalData nd = nodal_extract(mesh, v);
  CHECK(nd.sign_domains == 2);

  // vertical nodal line s = 1 crosses the midline once
  for (int i = 0; i < mesh.node_count(); ++i)
    v[i] = std::sin(mesh.nodes[i].b) * (mesh.nodes[i].a - 1.0);
  nd = nodal_extract(mesh, v);
  CHECK(nd.sign_domains == 2);
  REQUIRE(nd.midline_s.size() == 1);
  CHECK(nd.midline_s[0] == doctest::Approx(1.0).epsilon(1e-4));

  Eigen::VectorXd tiny = Eigen::VectorXd::Constant(mesh.node_count(), 1e-13);
  CHECK_THROWS_AS(nodal_extract(mesh, tiny), std::invalid_argument);
}

TEST_CASE("node spacing report") {
  NodalData nd;
  nd.midline_s = {1.0, 2.0, 3.5};
  NodeSpacingReport rep = node_spacing_report(nd);
  REQUIRE(rep.spacings.size() == 2);
  CHECK(rep.spacings[0] == doctest::Approx(1.0));
  CHECK(rep.spacings[1] == doctest::Approx(1.5));
  CHECK(rep.strictly_increasing);

  nd.midline_s = {1.0, 3.0};  // single spacing: trivially monotone
  CHECK(node_spacing_report(nd).strictly_increasing);

  nd.midline_s = {1.0};
  CHECK_THROWS_AS(node_spacing_report(nd), std::invalid_argument);
}

TEST_CASE("profile of a constant field is flat") {
  Aperture ap = Aperture::from_theta_deg(45.0);
  Mesh mesh = build_rectangle_mesh(4.0, kPi, 16, 16,
                                   {BoundaryTag::Axis, BoundaryTag::Truncation,
                                    BoundaryTag::WallOuter,
                                    BoundaryTag::WallInner});
  Eigen::VectorXd v = Eigen::VectorXd::Ones(mesh.node_count());
  Profile prof = profile_report(mesh, v, ap, 24);
  for (double p : prof.psi2_max) CHECK(p == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("no discrete spectrum for m = 1 at theta = 45") {
  Aperture ap = Aperture::from_theta_deg(45.0);
  EigenSolveParams ep;
  ep.k = 3;
  LayerResult r = solve_layer(ap, 1, ep, coarse_mesh(), fixed_policy(9.0));
  CHECK(r.count() == 0);
  // the smallest Ritz value sits at or above the continuum threshold
  REQUIRE(!r.spectrum.above_threshold.empty());
  CHECK(r.spectrum.above_threshold[0] >= 1.0 - 1e-6);
}

TEST_CASE("smallest Ritz value for higher partial waves stays above 1") {
  for (double theta : {30.0, 60.0}) {
    Aperture ap = Aperture::from_theta_deg(theta);
    double v = smallest_ritz(ap, 1, coarse_mesh(), ap.tip_s() + 7.0);
    CHECK(v >= 1.0 - 1e-6);
  }
}

TEST_CASE("near-planar layer is weakly bound") {
  Aperture ap = Aperture::from_beta_deg(89.0);  // theta = 1 degree
  EigenSolveParams ep;
  ep.k = 1;
  LayerResult r = solve_layer(ap, 0, ep, {0.3, 2.0, 15.0}, fixed_policy(40.0));
  double v = r.count() > 0 ? r.lambda(0) : r.spectrum.above_threshold.at(0);
  CHECK(std::abs(v - 1.0) <= 0.02);
}

TEST_CASE("single-angle sweep equals solve_layer") {
  Aperture ap = Aperture::from_beta_deg(12.0);
  EigenSolveParams ep;
  ep.k = 3;
  MeshParams mp{0.35, 2.0, 15.0};
  ConvergencePolicy pol = fixed_policy(3.0 * ap.tip_s() + 15.0);
  LayerResult direct = solve_layer(ap, 0, ep, mp, pol);
  SweepResult sw = sweep({ap}, 3, ep, mp, pol, 1);
  REQUIRE(sw.entries.size() == 1);
  REQUIRE(sw.entries[0].ok);
  REQUIRE(static_cast<int>(sw.entries[0].lambdas.size()) == direct.count());
  for (int j = 0; j < direct.count(); ++j)
    CHECK(sw.entries[0].lambdas[j] == direct.lambda(j));
}

TEST_CASE("FH third term vanishes at theta = pi/4") {
  Aperture ap = Aperture::from_theta(kPi / 4);
  EigenSolveParams ep;
  ep.k = 1;
  // binding at 45 degrees is weak; any converged eigenpair of the truncated
  // pencil works for the coefficient check, so do not filter at 1
  ep.threshold = 1e300;
  LayerResult r = solve_layer(ap, 0, ep, {0.4, 2.0, 15.0}, fixed_policy(10.0));
  REQUIRE(r.count() >= 1);
  DerivativeEstimate fh = eigenvalue_derivative_fh(r, 1);
  // cot(pi/2) = 0 kills the third term up to roundoff
  double scale = std::abs(fh.fh_terms[0][2]) + std::abs(fh.fh_terms[1][2]);
  for (int lvl = 0; lvl < 3; ++lvl)
    CHECK(std::abs(fh.fh_terms[2][lvl]) <= 1e-12 * scale);
  CHECK(fh.fh_converged);
}

TEST_CASE("branch crossing guard rejects close branches") {
  // a fabricated solver curve is enough for fd_derivative; the ordered-branch
  // guard itself lives in eigenvalue_derivative_fd and needs real solves, so
  // exercise only the reachable contract here: theta out of range
  Aperture ap = Aperture::from_theta_deg(89.9);
  EigenSolveParams ep;
  CHECK_THROWS_AS(
      eigenvalue_derivative_fd(ap, 1, 0.05, ep, coarse_mesh(), fixed_policy(8)),
      std::invalid_argument);
}

TEST_CASE("envelope far lobe moves away from the tip with the branch index") {
  Aperture ap = Aperture::from_theta_deg(80.0);
  EigenSolveParams ep;
  ep.k = 2;
  MeshParams mp{0.3, 2.0, 15.0};
  LayerResult r = solve_layer(ap, 0, ep, mp, fixed_policy(60.0));
  REQUIRE(r.count() >= 2);
  Eigen::VectorXd f1 = r.system.expand(r.spectrum.vectors.col(0));
  Eigen::VectorXd f2 = r.system.expand(r.spectrum.vectors.col(1));
  Profile p1 = profile_report(r.mesh, f1, ap);
  Profile p2 = profile_report(r.mesh, f2, ap);
  REQUIRE(!p1.maxima_z.empty());
  REQUIRE(!p2.maxima_z.empty());
  CHECK(p2.maxima_z.back() > p1.maxima_z.back());
}

TEST_CASE("binding deepens as beta shrinks") {
  // smallest Ritz value of the truncated problem, comparable across angles
  auto lowest = [](double beta_deg, double smax_extra) {
    Aperture ap = Aperture::from_beta_deg(beta_deg);
    EigenSolveParams ep;
    ep.k = 1;
    ep.threshold = 1e300;
    MeshParams mp{0.35, 2.0, 15.0};
    LayerResult r =
        solve_layer(ap, 0, ep, mp, fixed_policy(ap.tip_s() + smax_extra));
    return r.spectrum.values.at(0);
  };
  double l85 = lowest(85.0, 30.0);
  double l45 = lowest(45.0, 30.0);
  double l5 = lowest(5.0, 30.0);
  CHECK(l85 > l45);
  CHECK(l45 > l5);
  CHECK(l5 > oracles::lambda0() - 1e-3);
}

TEST_CASE("FH term partial sums stay tame under axis grading") {
  Aperture ap = Aperture::from_theta_deg(80.0);
  EigenSolveParams ep;
  ep.k = 1;
  LayerResult r = solve_layer(ap, 0, ep, {0.3, 2.0, 15.0}, fixed_policy(60.0));
  REQUIRE(r.count() >= 1);
  DerivativeEstimate fh = eigenvalue_derivative_fh(r, 1);
  // the individually singular terms may drift logarithmically with the
  // grading level but must not blow up; the three-term total is Cauchy
  for (int t = 0; t < 3; ++t) {
    double d21 = std::abs(fh.fh_terms[t][1] - fh.fh_terms[t][0]);
    double d32 = std::abs(fh.fh_terms[t][2] - fh.fh_terms[t][1]);
    double scale = std::abs(fh.fh_terms[t][0]) + 1e-12;
    CHECK(d32 <= 10.0 * d21 + 1e-10 * scale);
  }
  double tot1 = fh.fh_terms[0][0] + fh.fh_terms[1][0] + fh.fh_terms[2][0];
  double tot2 = fh.fh_terms[0][1] + fh.fh_terms[1][1] + fh.fh_terms[2][1];
  double tot3 = fh.fh_terms[0][2] + fh.fh_terms[1][2] + fh.fh_terms[2][2];
  CHECK(std::abs(tot3 - tot2) <= 0.6 * std::abs(tot2 - tot1) + 1e-10);
  CHECK(fh.fh_converged);
}
