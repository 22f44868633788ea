#include "conelayer/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "conelayer/oracles.hpp"
#include "conelayer/p2.hpp"
#include "conelayer/quadrature.hpp"

#include <chrono>
#include <cstdio>

namespace conelayer {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct SolveStage {
  Mesh mesh;
  AssembledSystem system;
  Spectrum spectrum;
};

bool verbose_stages() {
  static const bool on = std::getenv("CONELAYER_VERBOSE") != nullptr;
  return on;
}

SolveStage run_stage(const Aperture& ap, int m, const EigenSolveParams& ep,
                     Mesh mesh) {
  auto t0 = std::chrono::steady_clock::now();
  SolveStage st;
  st.system = assemble_weighted(mesh, ap, m);
  st.spectrum = solve_lowest(st.system, ep);
  if (verbose_stages()) {
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr,
                 "[stage] theta=%.4f m=%d nodes=%d nfree=%d ops=%d found=%zu "
                 "conv=%d %.1fs\n",
                 ap.theta(), m, mesh.node_count(), st.system.n_free,
                 st.spectrum.iterations, st.spectrum.values.size(),
                 st.spectrum.converged ? 1 : 0, dt);
  }
  st.mesh = std::move(mesh);
  return st;
}

std::vector<double> branch_deltas(const std::vector<double>& a,
                                  const std::vector<double>& b) {
  size_t n = std::min(a.size(), b.size());
  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = std::abs(a[i] - b[i]);
  return d;
}

bool all_below(const std::vector<double>& v, double tol) {
  for (double x : v)
    if (!(x < tol)) return false;
  return true;
}

int env_thread_cap() {
  const char* env = std::getenv("CONELAYER_THREADS");
  if (!env) return 0;
  int v = std::atoi(env);
  return v > 0 ? v : 0;
}

}  // namespace

double LayerResult::lambda(int j) const {
  if (j < 0 || j >= count()) return kNaN;
  if (j < static_cast<int>(extrapolated.size())) return extrapolated[j];
  return spectrum.values[j];
}

LayerResult solve_layer(const Aperture& ap, int m, const EigenSolveParams& ep,
                        const MeshParams& mp, const ConvergencePolicy& policy) {
  LayerResult res{ap, m, {}, {}, {}, 0.0, 0, {}, {}, {}, false, false};

  double s_max;
  if (policy.fixed_smax) {
    s_max = planned_truncation(ap, mp, *policy.fixed_smax);
  } else {
    double kappa = std::sqrt(1.0 - policy.span_lambda);
    double s_req =
        policy.span_factor * (ap.tip_s() + policy.tail_safety / kappa);
    s_max = planned_truncation(ap, mp, s_req);
  }

  EigenSolveParams ep_run = ep;
  SolveStage cur = run_stage(ap, m, ep_run,
                             generate_mesh(build_domain(ap, s_max), mp));
  // When fewer than the requested k states are resolved below the threshold,
  // move the shift next to the threshold: the near-threshold cluster then
  // maps to well-separated shift-inverted eigenvalues.  States below the
  // shift are still recovered as the opposite Lanczos extreme.
  auto escalate_sigma = [&](const SolveStage& st) {
    if (static_cast<int>(st.spectrum.values.size()) >= ep.k) return;
    double top = st.spectrum.values.empty() ? ep_run.sigma.value_or(0.5)
                                            : st.spectrum.values.back();
    double delta = std::max(0.5 * (ep.threshold - top), 5e-4);
    double cand = ep.threshold - delta;
    if (cand > ep_run.sigma.value_or(-1e300)) ep_run.sigma = cand;
  };
  if (policy.fixed_smax) {
    res.smax_converged = true;
  } else {
    for (int d = 0; d < policy.max_doublings; ++d) {
      escalate_sigma(cur);
      double s2 = planned_truncation(ap, mp, 2.0 * s_max);
      SolveStage next =
          run_stage(ap, m, ep_run, generate_mesh(build_domain(ap, s2), mp));
      res.smax_delta =
          branch_deltas(cur.spectrum.values, next.spectrum.values);
      bool same_count =
          cur.spectrum.values.size() == next.spectrum.values.size();
      bool enough = static_cast<int>(next.spectrum.values.size()) >= ep.k;
      s_max = s2;
      cur = std::move(next);
      ++res.doublings;
      // Converged only when the requested count is present and stable; a
      // larger domain can still admit further near-threshold states.
      if (same_count && enough && all_below(res.smax_delta, policy.smax_tol)) {
        res.smax_converged = true;
        break;
      }
    }
  }
  res.s_max = s_max;

  if (policy.do_refine) {
    escalate_sigma(cur);
    SolveStage fine = run_stage(ap, m, ep_run, refine_mesh(cur.mesh));
    res.refine_delta =
        branch_deltas(cur.spectrum.values, fine.spectrum.values);
    res.refine_checked = true;
    size_t nsh = std::min(cur.spectrum.values.size(),
                          fine.spectrum.values.size());
    res.extrapolated.resize(fine.spectrum.values.size());
    for (size_t j = 0; j < fine.spectrum.values.size(); ++j) {
      if (j < nsh) {
        // Order-4 Richardson over the nested pair of meshes.
        res.extrapolated[j] =
            (16.0 * fine.spectrum.values[j] - cur.spectrum.values[j]) / 15.0;
      } else {
        res.extrapolated[j] = fine.spectrum.values[j];
      }
    }
    cur = std::move(fine);
  }

  res.mesh = std::move(cur.mesh);
  res.system = std::move(cur.system);
  res.spectrum = std::move(cur.spectrum);
  return res;
}

double SweepResult::branch(int i, int j) const {
  if (i < 0 || i >= static_cast<int>(entries.size())) return kNaN;
  const auto& l = entries[i].lambdas;
  if (!entries[i].ok || j < 0 || j >= static_cast<int>(l.size())) return kNaN;
  return l[j];
}

double SweepResult::max_branch_increase() const {
  double worst = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < branch_count; ++j) {
    for (size_t i = 0; i + 1 < entries.size(); ++i) {
      double a = branch(static_cast<int>(i), j);
      double b = branch(static_cast<int>(i) + 1, j);
      if (std::isnan(a) || std::isnan(b)) continue;
      worst = std::max(worst, b - a);
    }
  }
  return worst;
}

double SweepResult::min_gap() const {
  double g = std::numeric_limits<double>::infinity();
  for (const auto& e : entries) {
    if (e.ok && e.lambdas.size() >= 2) g = std::min(g, e.min_gap);
  }
  return g;
}

SweepResult sweep(const std::vector<Aperture>& angles, int j_max,
                  const EigenSolveParams& ep, const MeshParams& mp,
                  const ConvergencePolicy& policy, int max_threads) {
  for (size_t i = 0; i + 1 < angles.size(); ++i) {
    if (!(angles[i].theta() < angles[i + 1].theta()))
      throw std::invalid_argument("sweep: angles must be sorted ascending");
  }
  SweepResult out;
  out.entries.resize(angles.size());

  EigenSolveParams ep2 = ep;
  ep2.k = j_max;

  int n = static_cast<int>(angles.size());
  int cap = env_thread_cap();
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  int workers = max_threads > 0 ? max_threads : (hw > 0 ? hw : 1);
  if (cap > 0) workers = std::min(workers, cap);
  workers = std::max(1, std::min(workers, n));

  std::atomic<int> next{0};
  auto work = [&]() {
    while (true) {
      int i = next.fetch_add(1);
      if (i >= n) break;
      SweepEntry& e = out.entries[i];
      e.theta_rad = angles[i].theta();
      e.beta_deg = angles[i].beta_deg();
      try {
        LayerResult r = solve_layer(angles[i], 0, ep2, mp, policy);
        e.ok = true;
        for (int j = 0; j < r.count(); ++j) e.lambdas.push_back(r.lambda(j));
        e.smax_delta = r.smax_delta;
        e.smax_converged = r.smax_converged;
        e.s_max = r.s_max;
        e.n_free = r.system.n_free;
        e.min_gap = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j + 1 < e.lambdas.size(); ++j)
          e.min_gap = std::min(e.min_gap, e.lambdas[j + 1] - e.lambdas[j]);
      } catch (const std::exception& ex) {
        e.ok = false;
        e.error = ex.what();
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  for (const auto& e : out.entries)
    out.branch_count =
        std::max(out.branch_count, static_cast<int>(e.lambdas.size()));
  return out;
}

DerivativeEstimate fd_derivative(const std::function<double(double)>& f,
                                 double theta, double h) {
  if (!(h > 0)) throw std::invalid_argument("fd_derivative: h must be > 0");
  DerivativeEstimate est;
  est.theta = theta;
  est.step = h;
  double d1 = (f(theta + h) - f(theta - h)) / (2 * h);
  double d2 = (f(theta + h / 2) - f(theta - h / 2)) / h;
  est.fd_step_h = d1;
  est.fd_step_h2 = d2;
  est.fd = (4.0 * d2 - d1) / 3.0;
  return est;
}

DerivativeEstimate eigenvalue_derivative_fd(const Aperture& ap, int j,
                                            double h,
                                            const EigenSolveParams& ep,
                                            const MeshParams& mp,
                                            const ConvergencePolicy& policy) {
  if (j < 1) throw std::invalid_argument("derivative: branch index is 1-based");
  double theta = ap.theta();
  if (!(theta - h > 0) || !(theta + h < kPi / 2))
    throw std::invalid_argument("derivative: theta +- h leaves (0, pi/2)");

  EigenSolveParams ep2 = ep;
  ep2.k = std::max(ep.k, j + 1);  // need the neighbor above for the gap check

  std::map<double, LayerResult> cache;
  auto lambda_j = [&](double th) {
    auto it = cache.find(th);
    if (it == cache.end()) {
      it = cache
               .emplace(th, solve_layer(Aperture::from_theta(th), 0, ep2, mp,
                                        policy))
               .first;
    }
    const LayerResult& r = it->second;
    if (r.count() < j)
      throw std::runtime_error("derivative: branch " + std::to_string(j) +
                               " not present at theta = " + std::to_string(th));
    // Ordered-branch derivative only makes sense away from crossings.
    double gap_below = j >= 2 ? r.lambda(j - 1) - r.lambda(j - 2) : 1.0;
    double gap_above =
        r.count() > j ? r.lambda(j) - r.lambda(j - 1) : 1.0;
    if (gap_below < 1e-3 || gap_above < 1e-3)
      throw std::runtime_error(
          "derivative: branch crossing detected near theta = " +
          std::to_string(th));
    return r.lambda(j - 1);
  };

  DerivativeEstimate est = fd_derivative(lambda_j, theta, h);
  est.branch = j;
  return est;
}

namespace {

// Integrates the three Feynman-Hellmann terms of one element over a list of
// barycentric sub-triangles, accumulating into terms[3].
void fh_accumulate(const Mesh& mesh, const Aperture& ap,
                   const Eigen::VectorXd& psi, int t,
                   const std::vector<std::array<std::array<double, 3>, 3>>&
                       bary_tris,
                   double terms[3]) {
  const auto& tri = mesh.triangles[t];
  const Point2& p0 = mesh.nodes[tri.v[0]];
  const Point2& p1 = mesh.nodes[tri.v[1]];
  const Point2& p2v = mesh.nodes[tri.v[2]];
  const double j11 = p1.a - p0.a, j12 = p2v.a - p0.a;
  const double j21 = p1.b - p0.b, j22 = p2v.b - p0.b;
  const double det = j11 * j22 - j12 * j21;
  const double i11 = j22 / det, i12 = -j21 / det;
  const double i21 = -j12 / det, i22 = j11 / det;

  double coeffs[6];
  int gl[6] = {tri.v[0], tri.v[1], tri.v[2], tri.mid[0], tri.mid[1],
               tri.mid[2]};
  for (int a = 0; a < 6; ++a) coeffs[a] = psi[gl[a]];

  const double ct = ap.cos_theta(), st = ap.sin_theta();
  const double s2t = std::sin(2 * ap.theta());
  const double c2t = std::cos(2 * ap.theta());
  const QuadratureRule& rule = triangle_rule_deg8();

  for (const auto& bt : bary_tris) {
    // Physical corners of the sub-triangle.
    double X[3][2];
    for (int cidx = 0; cidx < 3; ++cidx) {
      X[cidx][0] = bt[cidx][0] * p0.a + bt[cidx][1] * p1.a + bt[cidx][2] * p2v.a;
      X[cidx][1] = bt[cidx][0] * p0.b + bt[cidx][1] * p1.b + bt[cidx][2] * p2v.b;
    }
    double det_sub = (X[1][0] - X[0][0]) * (X[2][1] - X[0][1]) -
                     (X[2][0] - X[0][0]) * (X[1][1] - X[0][1]);
    det_sub = std::abs(det_sub);
    if (det_sub == 0.0) continue;
    for (const auto& node : rule.nodes) {
      std::array<double, 3> bary{};
      for (int c = 0; c < 3; ++c)
        bary[c] = node.bary[0] * bt[0][c] + node.bary[1] * bt[1][c] +
                  node.bary[2] * bt[2][c];
      auto N = p2::shape(bary);
      auto dN = p2::shape_grad(bary);
      double val = 0, gs = 0, gu = 0;
      for (int a = 0; a < 6; ++a) {
        val += coeffs[a] * N[a];
        gs += coeffs[a] * (i11 * dN[a][0] + i12 * dN[a][1]);
        gu += coeffs[a] * (i21 * dN[a][0] + i22 * dN[a][1]);
      }
      double s = bary[0] * p0.a + bary[1] * p1.a + bary[2] * p2v.a;
      double u = bary[0] * p0.b + bary[1] * p1.b + bary[2] * p2v.b;
      double r = weight_r({s, u}, ap);
      if (!(r > 0)) continue;  // points on the axis itself carry no area
      double scale = node.weight * det_sub;
      // |psi~_s|^2 and |psi~_u|^2 for psi~ = sqrt(r) psi.
      double ts = r * gs * gs + ct * val * gs + ct * ct * val * val / (4 * r);
      double tu = r * gu * gu - st * val * gu + st * st * val * val / (4 * r);
      terms[0] += scale * (-2.0 / s2t) * ts;
      terms[1] += scale * (2.0 / s2t) * tu;
      terms[2] += scale * (c2t / s2t) * val * val / (2 * r);
    }
  }
}

using BaryTri = std::array<std::array<double, 3>, 3>;

// Bands {lambda_c in [lo, hi]} of the reference triangle, split into affine
// sub-triangles.  lambda_c is the barycentric coordinate of corner c.
std::vector<BaryTri> bands_by_corner_coord(int c,
                                           const std::vector<double>& cuts) {
  int i = (c + 1) % 3, jx = (c + 2) % 3;
  auto on_edge = [&](int other, double t) {
    std::array<double, 3> b{};
    b[c] = t;
    b[other] = 1.0 - t;
    return b;
  };
  std::vector<BaryTri> out;
  // cuts ascending in lambda_c, first 0 and last 1 implied.
  std::vector<double> cc = cuts;
  cc.insert(cc.begin(), 0.0);
  cc.push_back(1.0);
  for (size_t b = 0; b + 1 < cc.size(); ++b) {
    double lo = cc[b], hi = cc[b + 1];
    std::array<double, 3> pi_lo = on_edge(i, lo), pj_lo = on_edge(jx, lo);
    if (hi >= 1.0 - 1e-15) {
      std::array<double, 3> apexb{};
      apexb[c] = 1.0;
      out.push_back({pi_lo, pj_lo, apexb});
    } else {
      std::array<double, 3> pi_hi = on_edge(i, hi), pj_hi = on_edge(jx, hi);
      out.push_back({pi_lo, pj_lo, pj_hi});
      out.push_back({pi_lo, pj_hi, pi_hi});
    }
  }
  return out;
}

}  // namespace

DerivativeEstimate eigenvalue_derivative_fh(const LayerResult& result, int j) {
  if (j < 1 || j > result.count())
    throw std::invalid_argument("eigenvalue_derivative_fh: bad branch index");
  const Aperture& ap = result.aperture;
  const Mesh& mesh = result.mesh;
  Eigen::VectorXd psi = result.system.expand(result.spectrum.vectors.col(j - 1));

  DerivativeEstimate est;
  est.theta = ap.theta();
  est.branch = j;

  // Whole-element decomposition reused for every level on regular elements.
  const std::vector<BaryTri> whole = {
      BaryTri{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}};

  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    bool on_axis[3];
    int n_axis = 0;
    for (int kc = 0; kc < 3; ++kc) {
      const Point2& p = mesh.nodes[tri.v[kc]];
      on_axis[kc] = std::abs(weight_r(p, ap)) < 1e-9;
      if (on_axis[kc]) ++n_axis;
    }
    if (n_axis == 0) {
      double acc[3] = {};
      fh_accumulate(mesh, ap, psi, t, whole, acc);
      for (int lvl = 0; lvl < 3; ++lvl)
        for (int tm = 0; tm < 3; ++tm) est.fh_terms[tm][lvl] += acc[tm];
      continue;
    }
    // Grade toward the axis: by the coordinate of the opposite corner when a
    // whole edge lies on the axis, else away from the axis vertex.
    int corner;
    bool toward_small = true;  // grade where lambda_corner is small
    if (n_axis >= 2) {
      corner = !on_axis[0] ? 0 : (!on_axis[1] ? 1 : 2);
      toward_small = true;  // axis edge is lambda_corner = 0
    } else {
      corner = on_axis[0] ? 0 : (on_axis[1] ? 1 : 2);
      toward_small = false;  // axis vertex is lambda_corner = 1
    }
    for (int lvl = 0; lvl < 3; ++lvl) {
      std::vector<double> cuts;
      for (int d = lvl + 1; d >= 1; --d) {
        double tcut = std::ldexp(1.0, -d);  // 2^-d
        cuts.push_back(toward_small ? tcut : 1.0 - tcut);
      }
      std::sort(cuts.begin(), cuts.end());
      double acc[3] = {};
      fh_accumulate(mesh, ap, psi, t, bands_by_corner_coord(corner, cuts),
                    acc);
      for (int tm = 0; tm < 3; ++tm) est.fh_terms[tm][lvl] += acc[tm];
    }
  }

  est.fh = est.fh_terms[0][2] + est.fh_terms[1][2] + est.fh_terms[2][2];
  double d21 = std::abs(est.fh_terms[2][1] - est.fh_terms[2][0]);
  double d32 = std::abs(est.fh_terms[2][2] - est.fh_terms[2][1]);
  double atol = 1e-12 * (1.0 + std::abs(est.fh));
  est.fh_converged = d32 < 10.0 * d21 + atol;
  return est;
}

CylinderBound cylinder_count_bound(const Aperture& ap, double lambda_bar) {
  double l0 = oracles::lambda0();
  if (!(lambda_bar > l0) || !(lambda_bar < 1.0))
    throw std::invalid_argument(
        "cylinder_count_bound: lambda_bar must lie in (lambda0, 1)");
  CylinderBound best;
  best.theta = ap.theta();
  best.lambda_bar = lambda_bar;
  double best_score = -1.0;
  const int M = 40000;
  for (int i = 1; i < M; ++i) {
    double R = kPi * i / M;
    double L = (kPi - R * ap.sin_theta()) / ap.cos_theta();
    if (!(L > 0)) continue;
    double rad = lambda_bar - l0 * kPi * kPi / (R * R);
    if (!(rad > 0)) continue;
    double score = L / kPi * std::sqrt(rad);
    int N = static_cast<int>(std::floor(score));
    if (N > best.N || (N == best.N && score > best_score)) {
      best.N = N;
      best.R = R;
      best.L = L;
      best_score = score;
    }
  }
  return best;
}

int count_below(const Spectrum& spectrum, double lambda_bar) {
  int n = 0;
  for (double v : spectrum.values)
    if (v < lambda_bar) ++n;
  return n;
}

namespace {

// 4x4 barycentric refinement lattice shared by the level-set and sign-domain
// machinery.  Lattice point (i, j) has barycentric ((4-i-j)/4, i/4, j/4).
struct FineLattice {
  // Global ids for lattice points; corners and midpoints reuse node ids,
  // quarter points and interior points get synthetic ids above node_count.
  std::vector<std::array<int, 15>> point_ids;  // per parent triangle
  std::vector<std::array<Point2, 15>> coords;
  std::vector<std::array<double, 15>> values;
  int total_points = 0;

  static int lattice_index(int i, int j) {
    // rows by j: j=0: i=0..4 -> 0..4; j=1: 5..8; j=2: 9..11; j=3: 12..13;
    // j=4: 14
    static const int row_start[5] = {0, 5, 9, 12, 14};
    return row_start[j] + i;
  }
};

FineLattice build_lattice(const Mesh& mesh, const Eigen::VectorXd& values) {
  FineLattice lat;
  int nt = mesh.triangle_count();
  lat.point_ids.resize(nt);
  lat.coords.resize(nt);
  lat.values.resize(nt);
  int next_id = mesh.node_count();
  std::map<std::tuple<int, int, int>, int> quarter_ids;  // (vmin, vmax, t)

  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    const Point2 p0 = mesh.nodes[tri.v[0]];
    const Point2 p1 = mesh.nodes[tri.v[1]];
    const Point2 p2v = mesh.nodes[tri.v[2]];
    for (int j = 0; j <= 4; ++j) {
      for (int i = 0; i + j <= 4; ++i) {
        int li = FineLattice::lattice_index(i, j);
        std::array<double, 3> bary = {(4.0 - i - j) / 4.0, i / 4.0, j / 4.0};
        lat.coords[t][li] = {
            bary[0] * p0.a + bary[1] * p1.a + bary[2] * p2v.a,
            bary[0] * p0.b + bary[1] * p1.b + bary[2] * p2v.b};
        auto N = p2::shape(bary);
        double v = 0;
        int gl[6] = {tri.v[0], tri.v[1], tri.v[2], tri.mid[0], tri.mid[1],
                     tri.mid[2]};
        for (int a = 0; a < 6; ++a) v += values[gl[a]] * N[a];
        lat.values[t][li] = v;

        int id;
        auto edge_point = [&](int va, int vb, int quarter) {
          // quarter in {1,2,3} measured from va along the edge (va, vb)
          if (quarter == 2) return -1;  // caller resolves to the midpoint id
          int lo = std::min(va, vb), hi = std::max(va, vb);
          int tq = va < vb ? quarter : 4 - quarter;
          auto key = std::make_tuple(lo, hi, tq);
          auto [it, inserted] = quarter_ids.emplace(key, next_id);
          if (inserted) ++next_id;
          return it->second;
        };
        if (i == 0 && j == 0) {
          id = tri.v[0];
        } else if (i == 4 && j == 0) {
          id = tri.v[1];
        } else if (i == 0 && j == 4) {
          id = tri.v[2];
        } else if (j == 0) {  // edge v0-v1
          id = i == 2 ? tri.mid[0] : edge_point(tri.v[0], tri.v[1], i);
        } else if (i + j == 4) {  // edge v1-v2, parameter j from v1
          id = j == 2 ? tri.mid[1] : edge_point(tri.v[1], tri.v[2], j);
        } else if (i == 0) {  // edge v0-v2, parameter j from v0
          id = j == 2 ? tri.mid[2] : edge_point(tri.v[0], tri.v[2], j);
        } else {
          id = next_id++;
        }
        lat.point_ids[t][li] = id;
      }
    }
  }
  lat.total_points = next_id;
  return lat;
}

void fine_triangles(const std::function<void(int parent, int a, int b, int c)>&
                        emit) {
  for (int j = 0; j <= 3; ++j) {
    for (int i = 0; i + j <= 3; ++i) {
      int a = FineLattice::lattice_index(i, j);
      int b = FineLattice::lattice_index(i + 1, j);
      int c = FineLattice::lattice_index(i, j + 1);
      emit(0, a, b, c);
      if (i + j <= 2) {
        int d = FineLattice::lattice_index(i + 1, j + 1);
        emit(1, b, d, c);
      }
    }
  }
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

std::vector<std::vector<Point2>> chain_segments(
    std::vector<std::pair<Point2, Point2>> segs, double qtol) {
  auto key = [qtol](const Point2& p) {
    return std::make_pair(static_cast<long long>(std::llround(p.a / qtol)),
                          static_cast<long long>(std::llround(p.b / qtol)));
  };
  std::map<std::pair<long long, long long>, std::vector<int>> ends;
  for (size_t i = 0; i < segs.size(); ++i) {
    ends[key(segs[i].first)].push_back(static_cast<int>(i));
    ends[key(segs[i].second)].push_back(static_cast<int>(i));
  }
  std::vector<char> used(segs.size(), 0);
  std::vector<std::vector<Point2>> chains;

  auto walk = [&](int start_seg, bool from_first) {
    std::vector<Point2> chain;
    int seg = start_seg;
    Point2 cur = from_first ? segs[seg].first : segs[seg].second;
    chain.push_back(cur);
    while (true) {
      used[seg] = 1;
      Point2 nxt = (key(segs[seg].first) == key(cur)) ? segs[seg].second
                                                      : segs[seg].first;
      chain.push_back(nxt);
      cur = nxt;
      int follow = -1;
      for (int cand : ends[key(cur)]) {
        if (!used[cand]) {
          follow = cand;
          break;
        }
      }
      if (follow < 0) break;
      seg = follow;
    }
    return chain;
  };

  // Open chains first (endpoints of degree one), then leftover loops.
  for (size_t i = 0; i < segs.size(); ++i) {
    if (used[i]) continue;
    bool first_open = ends[key(segs[i].first)].size() == 1;
    bool second_open = ends[key(segs[i].second)].size() == 1;
    if (first_open || second_open)
      chains.push_back(walk(static_cast<int>(i), first_open));
  }
  for (size_t i = 0; i < segs.size(); ++i) {
    if (!used[i]) chains.push_back(walk(static_cast<int>(i), true));
  }
  return chains;
}

double mesh_diameter(const Mesh& mesh) {
  double lo_a = 1e300, hi_a = -1e300, lo_b = 1e300, hi_b = -1e300;
  for (int v = 0; v < mesh.n_vertices; ++v) {
    lo_a = std::min(lo_a, mesh.nodes[v].a);
    hi_a = std::max(hi_a, mesh.nodes[v].a);
    lo_b = std::min(lo_b, mesh.nodes[v].b);
    hi_b = std::max(hi_b, mesh.nodes[v].b);
  }
  return std::hypot(hi_a - lo_a, hi_b - lo_b);
}

std::vector<std::pair<Point2, Point2>> level_segments(
    const Mesh& mesh, const Eigen::VectorXd& node_values, double level) {
  FineLattice lat = build_lattice(mesh, node_values);
  double scale = std::max(node_values.cwiseAbs().maxCoeff(), std::abs(level));
  // Values within the structure floor of the level are nudged to a fixed
  // side: zero lines passing exactly through lattice points still produce
  // crossings, while sub-floor wiggles (solver noise and the ~1e-7-relative
  // boundary undershoot P2 eigenfunctions show on practical meshes) do not
  // read as sign structure.  Genuine nodal lobes sit at >= 1e-2 relative
  // amplitude, three orders above the floor.  The rule is global, so shared
  // vertices stay consistent across triangles.
  const double fzero = 1e-5 * (scale > 0 ? scale : 1.0);
  std::vector<std::pair<Point2, Point2>> segs;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    fine_triangles([&](int, int a, int b, int c) {
      int idx[3] = {a, b, c};
      double f[3];
      Point2 p[3];
      for (int q = 0; q < 3; ++q) {
        f[q] = lat.values[t][idx[q]] - level;
        if (std::abs(f[q]) < fzero) f[q] = fzero;
        p[q] = lat.coords[t][idx[q]];
      }
      Point2 pts[3];
      int np = 0;
      for (int e = 0; e < 3; ++e) {
        double fa = f[e], fb = f[(e + 1) % 3];
        if (fa * fb < 0) {
          double w = fa / (fa - fb);
          pts[np++] = {p[e].a + w * (p[(e + 1) % 3].a - p[e].a),
                       p[e].b + w * (p[(e + 1) % 3].b - p[e].b)};
        }
      }
      if (np == 2) segs.emplace_back(pts[0], pts[1]);
    });
  }
  return segs;
}

}  // namespace

std::vector<std::vector<Point2>> level_set(const Mesh& mesh,
                                           const Eigen::VectorXd& node_values,
                                           double level) {
  auto segs = level_segments(mesh, node_values, level);
  if (segs.empty()) return {};
  return chain_segments(std::move(segs), 1e-9 * mesh_diameter(mesh));
}

NodalData nodal_extract(const Mesh& mesh, const Eigen::VectorXd& node_values) {
  double vmax = node_values.cwiseAbs().maxCoeff();
  if (!(vmax >= 1e-12))
    throw std::invalid_argument("nodal_extract: field is numerically zero");
  NodalData out;
  out.polylines = level_set(mesh, node_values, 0.0);

  // Sign domains by union-find over uniform-sign fine triangles.
  FineLattice lat = build_lattice(mesh, node_values);
  const double ztol = 1e-5 * vmax;  // same structure floor as the level sets
  int nt = mesh.triangle_count();
  std::vector<signed char> tri_sign;
  tri_sign.reserve(nt * 16);
  std::map<std::pair<int, int>, int> edge_owner;  // fine edge -> fine tri
  UnionFind uf(nt * 16);
  int fid = 0;
  for (int t = 0; t < nt; ++t) {
    fine_triangles([&](int, int a, int b, int c) {
      int idx[3] = {a, b, c};
      int pos = 0, neg = 0;
      for (int q = 0; q < 3; ++q) {
        double v = lat.values[t][idx[q]];
        if (v > ztol) ++pos;
        if (v < -ztol) ++neg;
      }
      signed char s = 0;
      if (pos > 0 && neg == 0) s = 1;
      if (neg > 0 && pos == 0) s = -1;
      tri_sign.push_back(s);
      if (s != 0) {
        for (int e = 0; e < 3; ++e) {
          int ga = lat.point_ids[t][idx[e]];
          int gb = lat.point_ids[t][idx[(e + 1) % 3]];
          auto kedge = std::minmax(ga, gb);
          auto [it, inserted] = edge_owner.emplace(kedge, fid);
          if (!inserted) {
            int other = it->second;
            if (tri_sign[other] == s) uf.unite(other, fid);
          }
        }
      }
      ++fid;
    });
  }
  std::map<int, int> roots;
  for (int i = 0; i < fid; ++i) {
    if (tri_sign[i] != 0) roots[uf.find(i)] += 1;
  }
  out.sign_domains = static_cast<int>(roots.size());

  // Crossings of the zero set with the strip mid-line u = pi/2.
  auto segs = level_segments(mesh, node_values, 0.0);
  std::vector<double> hits;
  for (const auto& [p, q] : segs) {
    double fu = p.b - kPi / 2, gu = q.b - kPi / 2;
    if (fu * gu < 0) {
      double w = fu / (fu - gu);
      hits.push_back(p.a + w * (q.a - p.a));
    } else if (fu == 0 && gu != 0) {
      hits.push_back(p.a);
    }
  }
  std::sort(hits.begin(), hits.end());
  double mergetol = 1e-7 * (1.0 + mesh_diameter(mesh));
  for (double h : hits) {
    if (out.midline_s.empty() || h - out.midline_s.back() > mergetol)
      out.midline_s.push_back(h);
  }
  return out;
}

NodeSpacingReport node_spacing_report(const NodalData& nodal) {
  if (nodal.midline_s.size() < 2)
    throw std::invalid_argument(
        "node_spacing_report: need at least two nodal lines");
  NodeSpacingReport rep;
  for (size_t i = 0; i + 1 < nodal.midline_s.size(); ++i)
    rep.spacings.push_back(nodal.midline_s[i + 1] - nodal.midline_s[i]);
  rep.strictly_increasing = true;
  for (size_t i = 0; i + 1 < rep.spacings.size(); ++i)
    if (!(rep.spacings[i + 1] > rep.spacings[i]))
      rep.strictly_increasing = false;
  return rep;
}

Profile profile_report(const Mesh& mesh, const Eigen::VectorXd& node_values,
                       const Aperture& ap, int n_bins) {
  if (n_bins < 2) throw std::invalid_argument("profile_report: n_bins < 2");
  Profile prof;
  double z_max = 0;
  for (int v = 0; v < mesh.n_vertices; ++v) {
    Point2 rz = map_point(mesh.nodes[v], Chart::SU, Chart::RZ, ap);
    z_max = std::max(z_max, rz.b);
  }
  prof.z.resize(n_bins);
  prof.psi2_max.assign(n_bins, 0.0);
  for (int i = 0; i < n_bins; ++i) prof.z[i] = z_max * i / (n_bins - 1);

  FineLattice lat = build_lattice(mesh, node_values);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    for (int li = 0; li < 15; ++li) {
      Point2 rz = map_point(lat.coords[t][li], Chart::SU, Chart::RZ, ap);
      int bin = static_cast<int>(std::floor(rz.b / z_max * (n_bins - 1) + 0.5));
      bin = std::clamp(bin, 0, n_bins - 1);
      double v2 = lat.values[t][li] * lat.values[t][li];
      prof.psi2_max[bin] = std::max(prof.psi2_max[bin], v2);
    }
  }
  double peak = *std::max_element(prof.psi2_max.begin(), prof.psi2_max.end());
  double floor_level = 1e-6 * peak;
  for (int i = 1; i + 1 < n_bins; ++i) {
    if (prof.psi2_max[i] > floor_level &&
        prof.psi2_max[i] > prof.psi2_max[i - 1] &&
        prof.psi2_max[i] >= prof.psi2_max[i + 1]) {
      prof.maxima_z.push_back(prof.z[i]);
    }
  }
  return prof;
}

double bnorm_share_within_z(const Mesh& mesh, const Aperture& ap,
                            const Eigen::VectorXd& node_values, double z_cut) {
  const QuadratureRule& rule = triangle_rule_deg5();
  double num = 0, den = 0;
  for (const auto& tri : mesh.triangles) {
    const Point2& p0 = mesh.nodes[tri.v[0]];
    const Point2& p1 = mesh.nodes[tri.v[1]];
    const Point2& p2v = mesh.nodes[tri.v[2]];
    double det = (p1.a - p0.a) * (p2v.b - p0.b) - (p2v.a - p0.a) * (p1.b - p0.b);
    int gl[6] = {tri.v[0], tri.v[1], tri.v[2], tri.mid[0], tri.mid[1],
                 tri.mid[2]};
    for (const auto& node : rule.nodes) {
      auto N = p2::shape(node.bary);
      double v = 0;
      for (int a = 0; a < 6; ++a) v += node_values[gl[a]] * N[a];
      double s = node.bary[0] * p0.a + node.bary[1] * p1.a + node.bary[2] * p2v.a;
      double u = node.bary[0] * p0.b + node.bary[1] * p1.b + node.bary[2] * p2v.b;
      double r = weight_r({s, u}, ap);
      double z = map_point({s, u}, Chart::SU, Chart::RZ, ap).b;
      double contrib = node.weight * det * r * v * v;
      den += contrib;
      if (z <= z_cut) num += contrib;
    }
  }
  return den > 0 ? num / den : 0.0;
}

double smallest_ritz(const Aperture& ap, int m, const MeshParams& mp,
                     double s_max) {
  Mesh mesh = generate_mesh(build_domain(ap, s_max), mp);
  AssembledSystem sys = assemble_weighted(mesh, ap, m);
  EigenSolveParams ep;
  ep.k = 1;
  ep.threshold = 1e300;
  Spectrum sp = solve_lowest(sys, ep);
  if (sp.values.empty())
    throw std::runtime_error("smallest_ritz: no eigenvalue returned");
  return sp.values[0];
}

}  // namespace conelayer
