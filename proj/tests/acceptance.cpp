// Acceptance suite: end-to-end checks of the layer-spectrum pipeline against
// analytic oracles and the qualitative spectral facts the solver must
// reproduce.  Each criterion prints one PASS/FAIL line; the exit code is the
// number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "conelayer/analysis.hpp"
#include "conelayer/io.hpp"
#include "conelayer/oracles.hpp"
#include "conelayer/svg.hpp"

using namespace conelayer;

namespace {

int g_failures = 0;
double g_t0 = 0;

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void report(int id, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("[%s] criterion %2d: %s%s%s  (t=%.0fs)\n", pass ? "PASS" : "FAIL",
              id, name.c_str(), detail.empty() ? "" : " -- ", detail.c_str(),
              now_s() - g_t0);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// Converged solves reused across criteria, keyed by beta in degrees.
std::map<double, LayerResult> g_layers;

const LayerResult& layer_at_beta(double beta_deg, int k = 7) {
  auto it = g_layers.find(beta_deg);
  if (it != g_layers.end()) return it->second;
  Aperture ap = Aperture::from_beta_deg(beta_deg);
  EigenSolveParams ep;
  ep.k = k;
  ep.max_iter = 8000;
  MeshParams mp{0.25, 4.0, 15.0};
  ConvergencePolicy pol;  // defaults: s_max doubling + one refinement
  LayerResult r = solve_layer(ap, 0, ep, mp, pol);
  return g_layers.emplace(beta_deg, std::move(r)).first->second;
}

void criterion1_cylinder_oracle() {
  double t0 = now_s();
  const double L = 40.0;
  WeightFn radial = [](double s, double) { return s; };
  Aperture dummy = Aperture::from_theta_deg(45.0);
  Mesh mesh = build_rectangle_mesh(
      kPi, L, 22, 270,
      {BoundaryTag::Axis, BoundaryTag::WallOuter, BoundaryTag::WallOuter,
       BoundaryTag::WallInner});
  AssembledSystem sys = assemble_weighted(mesh, dummy, 0, &radial);
  EigenSolveParams p;
  p.k = 5;
  p.threshold = 1e300;
  p.sigma = 0.3;
  p.max_iter = 2000;
  Spectrum sp = solve_lowest(sys, p);
  auto exact = oracles::cylinder_spectrum(kPi, L, 5);
  double dt = now_s() - t0;
  bool pass = sys.n_free <= 100000 && sp.values.size() == 5 && dt < 60.0;
  double worst = 0;
  for (int i = 0; i < 5 && pass; ++i) {
    double rel = std::abs(sp.values[i] - exact[i]) / exact[i];
    worst = std::max(worst, rel);
    if (!(rel < 1e-3)) pass = false;
  }
  report(1, "cylinder oracle R=pi L=40, 5 modes within 0.1%", pass,
         "ndof=" + std::to_string(sys.n_free) + " worst rel err=" + fmt(worst) +
             " time=" + fmt(dt) + "s");
}

void criterion2_lambda0() {
  double l0 = oracles::lambda0();
  bool pass = std::abs(l0 - 0.58596) <= 5e-6;
  report(2, "lambda0 = j01^2/pi^2 = 0.58596 +- 5e-6", pass, fmt(l0));
}

void criterion3_seven_below_threshold() {
  bool pass = true;
  std::string detail;
  for (double beta : {2.5, 5.0, 10.0}) {
    const LayerResult& r = layer_at_beta(beta);
    bool ok = r.count() >= 7 && r.spectrum.converged;
    for (int j = 0; j < r.count(); ++j) {
      if (!(r.spectrum.values[j] < 1.0)) ok = false;
      if (!(r.spectrum.residuals[j] <= 1e-9)) ok = false;
    }
    detail += "beta=" + fmt(beta) + ": n=" + std::to_string(r.count()) + " [";
    for (int j = 0; j < r.count(); ++j)
      detail += (j ? " " : "") + fmt(r.lambda(j));
    detail += "]";
    detail += ok ? " ok; " : " FAIL; ";
    if (!ok) pass = false;
  }
  report(3, "at least 7 eigenvalues below 1 at beta in {2.5, 5, 10} deg", pass,
         detail);
}

void criterion4_higher_waves_empty() {
  double t0 = now_s();
  bool pass = true;
  std::string detail;
  MeshParams mp{0.3, 2.0, 15.0};
  for (double theta : {30.0, 60.0, 85.0}) {
    for (int m : {1, 2}) {
      Aperture ap = Aperture::from_theta_deg(theta);
      double s_max = std::max(2.0 * ap.tip_s(), ap.tip_s() + 12.0);
      double v = smallest_ritz(ap, m, mp, s_max);
      bool ok = v >= 1.0 - 1e-6;
      if (!ok) pass = false;
      detail += "(" + fmt(theta) + "," + std::to_string(m) + ")=" + fmt(v) +
                (ok ? " " : " FAIL ");
    }
  }
  double dt = now_s() - t0;
  if (dt >= 300.0) pass = false;
  report(4, "m=1,2 lowest Ritz >= 1 - 1e-6 at theta in {30,60,85} deg", pass,
         detail + "time=" + fmt(dt) + "s");
}

void criterion5_counting_bound() {
  bool pass = true;
  std::string detail;
  int n_positive = 0;
  struct Case {
    double theta_deg, lambda_bar, beta_deg;
  };
  for (const Case& c : {Case{85.0, 0.9, 5.0}, Case{87.5, 0.95, 2.5}}) {
    CylinderBound cb =
        cylinder_count_bound(Aperture::from_theta_deg(c.theta_deg),
                             c.lambda_bar);
    const LayerResult& r = layer_at_beta(c.beta_deg);
    int fem = count_below(r.spectrum, c.lambda_bar);
    if (cb.N >= 1) ++n_positive;
    bool ok = fem >= cb.N;
    if (!ok) pass = false;
    detail += "theta=" + fmt(c.theta_deg) + ": N=" + std::to_string(cb.N) +
              " fem=" + std::to_string(fem) + (ok ? "; " : " FAIL; ");
  }
  if (n_positive < 1) pass = false;
  report(5, "FEM count_below >= cylinder bound, N >= 1 in one case", pass,
         detail);
}

void criterion6_derivative_crosscheck() {
  Aperture ap = Aperture::from_theta_deg(80.0);
  EigenSolveParams ep;
  ep.k = 2;
  ep.max_iter = 2000;
  MeshParams mp{0.25, 4.0, 15.0};
  ConvergencePolicy pol;
  double h = 0.5 * kPi / 180.0;

  DerivativeEstimate fd =
      eigenvalue_derivative_fd(ap, 1, h, ep, mp, pol);
  LayerResult center = solve_layer(ap, 0, ep, mp, pol);
  DerivativeEstimate fh = eigenvalue_derivative_fh(center, 1);

  // order-2 self consistency of the plain central differences
  double e1 = std::abs(fd.fd_step_h - fd.fd);
  double e2 = std::abs(fd.fd_step_h2 - fd.fd);
  bool order2 = e2 > 0 ? (e1 / e2 > 2.0 && e1 / e2 < 8.0) : true;

  double rel = std::abs(fd.fd - fh.fh) / std::max(std::abs(fd.fd),
                                                  std::abs(fh.fh));
  bool pass = order2 && (!fh.fh_converged || rel <= 1e-3);
  report(6, "FD (Richardson) vs FH derivative of branch 1 at theta = 80 deg",
         pass,
         "fd=" + fmt(fd.fd) + " fh=" + fmt(fh.fh) + " rel=" + fmt(rel) +
             " fh_cauchy=" + (fh.fh_converged ? "yes" : "no") +
             " fd_order_ratio=" + fmt(e2 > 0 ? e1 / e2 : -1.0));
}

void criterion7_nodal_structure() {
  const LayerResult& r = layer_at_beta(2.5);
  bool pass = r.count() >= 7;
  std::string detail;
  NodalData nd7;
  for (int j = 1; j <= std::min(7, r.count()); ++j) {
    Eigen::VectorXd field = r.system.expand(r.spectrum.vectors.col(j - 1));
    NodalData nd = nodal_extract(r.mesh, field);
    detail += std::to_string(j) + ":" + std::to_string(nd.sign_domains) + " ";
    if (nd.sign_domains != j) pass = false;
    if (j == 7) nd7 = nd;
  }
  bool spacing_ok = false;
  if (pass && nd7.midline_s.size() >= 2) {
    NodeSpacingReport rep = node_spacing_report(nd7);
    spacing_ok = rep.strictly_increasing;
  }
  if (!spacing_ok) pass = false;
  report(7, "sign domains equal the branch index; j=7 spacings increase", pass,
         "domains " + detail +
             (spacing_ok ? "spacings increasing" : "spacings NOT increasing"));
}

void criterion8_monotone_convergence() {
  Aperture ap = Aperture::from_theta_deg(80.0);
  EigenSolveParams ep;
  ep.k = 4;
  ep.max_iter = 2000;
  MeshParams mp{0.3, 4.0, 15.0};

  auto values = [&](double s_req, bool refine) {
    ConvergencePolicy pol;
    pol.fixed_smax = s_req;
    pol.do_refine = refine;
    LayerResult r = solve_layer(ap, 0, ep, mp, pol);
    return r.spectrum.values;
  };
  double s1 = planned_truncation(ap, mp, 55.0);
  auto a = values(s1, false);
  auto b = values(2.0 * s1, false);  // planned alignment inside solve_layer
  bool smax_ok = a.size() >= 4 && b.size() >= a.size();
  for (size_t j = 0; j < std::min(a.size(), b.size()) && smax_ok; ++j)
    if (!(b[j] <= a[j] + 1e-8)) smax_ok = false;

  // one nested refinement on the smaller domain
  Mesh coarse = generate_mesh(build_domain(ap, s1), mp);
  AssembledSystem sc = assemble_weighted(coarse, ap, 0);
  Spectrum spc = solve_lowest(sc, ep);
  Mesh fine = refine_mesh(coarse);
  AssembledSystem sf = assemble_weighted(fine, ap, 0);
  Spectrum spf = solve_lowest(sf, ep);
  bool ref_ok = spc.values.size() >= 4 && spf.values.size() >= spc.values.size();
  for (size_t j = 0; j < std::min(spc.values.size(), spf.values.size()) &&
                     ref_ok;
       ++j)
    if (!(spf.values[j] <= spc.values[j] + 1e-8)) ref_ok = false;

  report(8, "lambda_j nonincreasing under s_max doubling and refinement",
         smax_ok && ref_ok,
         std::string("smax ") + (smax_ok ? "ok" : "FAIL") + ", refine " +
             (ref_ok ? "ok" : "FAIL"));
}

void criterion9_simplicity() {
  std::vector<Aperture> angles;
  for (int b = 15; b >= 1; --b) angles.push_back(Aperture::from_beta_deg(b));
  std::sort(angles.begin(), angles.end(),
            [](const Aperture& a, const Aperture& b) {
              return a.theta() < b.theta();
            });
  EigenSolveParams ep;
  ep.k = 7;
  ep.max_iter = 2000;
  MeshParams mp{0.25, 4.0, 15.0};
  ConvergencePolicy pol;
  pol.do_refine = false;  // gap resolution does not need Richardson
  SweepResult sw = sweep(angles, 7, ep, mp, pol, 0);

  bool all_ok = true;
  int n_values = 0;
  bool in_range = true;
  for (const auto& e : sw.entries) {
    if (!e.ok) {
      all_ok = false;
      continue;
    }
    n_values += static_cast<int>(e.lambdas.size());
    for (double l : e.lambdas)
      if (!(l > 0.0 && l < 1.0)) in_range = false;
  }
  double gap = sw.min_gap();
  bool pass = all_ok && in_range && gap > 1e-3;
  report(9, "no degeneracies across the beta = 1..15 deg sweep", pass,
         "angles ok=" + std::to_string(all_ok) + " min gap=" + fmt(gap) +
             " values=" + std::to_string(n_values));

  // keep the sweep artifacts for inspection
  std::filesystem::create_directories("acceptance_out");
  write_sweep_svg("acceptance_out/sweep.svg", sw);
}

void criterion10_reproducibility() {
  namespace fs = std::filesystem;
  std::string base = "acceptance_out/repro";
  fs::remove_all(base);
  fs::create_directories(base + "/a");
  fs::create_directories(base + "/b");
  std::vector<std::string> args = {
      "solve", "--beta-deg", "10",   "--k",    "3",    "--mesh-h", "0.3",
      "--smax", "60",        "--output-dir", ""};
  auto run_into = [&](const std::string& dir) {
    auto a = args;
    a.back() = dir;
    return run_cli(a);
  };
  bool pass = run_into(base + "/a") == 0 && run_into(base + "/b") == 0;
  if (pass) {
    pass = read_file(base + "/a/spectrum.csv") ==
           read_file(base + "/b/spectrum.csv");
  }
  report(10, "two runs from one manifest give byte-identical spectrum.csv",
         pass, "");
}

void criterion11_extent() {
  const LayerResult& r = layer_at_beta(2.5);
  bool pass = r.count() >= 7;
  std::string detail;
  for (int j = 1; j <= std::min(7, r.count()); ++j) {
    Eigen::VectorXd field = r.system.expand(r.spectrum.vectors.col(j - 1));
    double share = bnorm_share_within_z(r.mesh, r.aperture, field, 250.0);
    detail += fmt(share) + " ";
    if (!(share >= 0.99)) pass = false;
  }
  report(11, "first 7 eigenfunctions carry 99% of the B-norm within z <= 250",
         pass, detail);
}

}  // namespace

int main(int argc, char** argv) {
  g_t0 = now_s();
  std::printf("acceptance suite: %s\n", kVersion);
  bool wanted[12];
  for (int i = 0; i <= 11; ++i) wanted[i] = argc <= 1;
  for (int a = 1; a < argc; ++a) {
    int id = std::atoi(argv[a]);
    if (id >= 1 && id <= 11) wanted[id] = true;
  }
  if (wanted[1]) criterion1_cylinder_oracle();
  if (wanted[2]) criterion2_lambda0();
  if (wanted[3]) criterion3_seven_below_threshold();
  if (wanted[4]) criterion4_higher_waves_empty();
  if (wanted[5]) criterion5_counting_bound();
  if (wanted[6]) criterion6_derivative_crosscheck();
  if (wanted[7]) criterion7_nodal_structure();
  if (wanted[8]) criterion8_monotone_convergence();
  if (wanted[9]) criterion9_simplicity();
  if (wanted[10]) criterion10_reproducibility();
  if (wanted[11]) criterion11_extent();
  std::printf("%d criteria failed\n", g_failures);
  return g_failures;
}
