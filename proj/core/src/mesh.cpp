#include "conelayer/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace conelayer {

namespace {

constexpr double kGrowth = 1.4;      // geometric step growth away from the tip
constexpr double kCapAspect = 2.0;   // target s-extent / u-extent in the cap
// Far-field coarsening along the strip: beyond the structure zone (a few tip
// lengths) the bound states decay like exp(-kappa s) with no transverse
// structure change, so cells may stretch in s.  Growth is a pure function of
// position, which keeps truncation sequences exactly nested.
constexpr double kFarZone = 2.5;     // structure zone ends at L + max(2.5 L, 30)
constexpr double kFarZoneMin = 30.0;
constexpr double kFarSlope = 30.0;   // ds grows by h every kFarSlope units
constexpr double kFarAspectCap = 8.0;

double far_field_start(double L) { return L + std::max(kFarZone * L, kFarZoneMin); }

int pow2_at_least(double x) {
  int p = 1;
  while (p < x && p < (1 << 24)) p <<= 1;
  return p;
}

struct Column {
  double s;
  int q;  // number of u-intervals; power of two
};

struct Plan {
  std::vector<Column> cols;  // ascending s; adjacent q ratio in {1/2, 1, 2}
  bool has_fan = false;      // apex fan from (0,0) to cols.front()
  double L = 0.0;            // tip abscissa
  double far_start = 1e300;  // strip abscissa where far-field growth begins
};

struct Spacing {
  int n_u;       // strip u-intervals
  double h_u;    // pi / n_u
  int q_tip;     // refined interval count near the tip
  double d_tip;  // tip-local step, h_u / 2^t
};

Spacing make_spacing(const MeshParams& p) {
  if (!(p.h > 0.0)) throw std::invalid_argument("generate_mesh: h must be > 0");
  if (!(p.grading >= 1.0))
    throw std::invalid_argument("generate_mesh: grading must be >= 1");
  Spacing sp;
  sp.n_u = std::max(4, pow2_at_least(kPi / p.h));
  sp.h_u = kPi / sp.n_u;
  int t = 0;
  while ((1 << t) < p.grading) ++t;
  sp.q_tip = sp.n_u << t;
  sp.d_tip = sp.h_u / (1 << t);
  return sp;
}

// Stations to the right of the tip column.  The sequence depends only on
// (aperture, params), never on the target, so truncations chosen from it are
// exactly nested under doubling.
std::vector<Column> march_strip(double L, const Spacing& sp, double h,
                                double s_min) {
  std::vector<Column> out;
  double s = L;
  int q = sp.q_tip;
  double step = sp.d_tip;
  const double far0 = far_field_start(L);
  while (s < s_min - 1e-9) {
    if (s < far0) {
      step = std::min(step * kGrowth, h);
      if (q > sp.n_u && kPi / q < 0.55 * step) q /= 2;
    } else {
      step = std::min(kFarAspectCap * h, h * (1.0 + (s - far0) / kFarSlope));
    }
    s += step;
    out.push_back({s, q});
  }
  return out;
}

// Stations to the left of the tip column, returned right-to-left.  u-interval
// counts halve through 2:1 bands as the column height s*cot(theta) shrinks;
// the march stops at q == 1, where a single apex triangle closes the wedge.
std::vector<Column> march_cap(double L, double cot, const Spacing& sp,
                              double h) {
  std::vector<Column> out;
  if (L <= 1.5 * sp.d_tip) return out;
  double s = L;
  int q = sp.q_tip;
  double step = sp.d_tip;
  while (true) {
    double u_sz = std::min(kPi, s * cot) / q;
    step = std::min({step * kGrowth, h,
                     std::max(kCapAspect * u_sz, 0.05 * sp.h_u)});
    step = std::min(step, 0.35 * s);
    double s_next = s - step;
    if (s_next <= 0.3 * step) break;
    int q_next = q;
    double target_u = std::clamp(step, sp.d_tip, sp.h_u);
    if (q_next > 1 && (s_next * cot) / q_next < 0.6 * target_u) q_next /= 2;
    out.push_back({s_next, q_next});
    s = s_next;
    q = q_next;
    if (q == 1) break;
  }
  return out;
}

class MeshBuilder {
 public:
  int add_vertex(double a, double b) {
    mesh_.nodes.push_back({a, b});
    return static_cast<int>(mesh_.nodes.size()) - 1;
  }

  // Corner vertices must all be added before finalize() appends midpoints.
  void add_triangle(int v0, int v1, int v2) {
    tris_.push_back({v0, v1, v2});
  }

  void add_boundary(int v0, int v1, BoundaryTag tag) {
    bedges_.push_back({v0, v1, tag});
  }

  Mesh finalize() {
    mesh_.n_vertices = static_cast<int>(mesh_.nodes.size());
    for (const auto& t : tris_) {
      Mesh::Tri tri;
      tri.v = t;
      for (int k = 0; k < 3; ++k) tri.mid[k] = midpoint(t[k], t[(k + 1) % 3]);
      mesh_.triangles.push_back(tri);
    }
    for (const auto& [v0, v1, tag] : bedges_) {
      mesh_.boundary.push_back({v0, v1, midpoint(v0, v1), tag});
    }
    return std::move(mesh_);
  }

 private:
  int midpoint(int a, int b) {
    auto key = std::minmax(a, b);
    auto it = midpoints_.find(key);
    if (it != midpoints_.end()) return it->second;
    int id = add_vertex(0.5 * (mesh_.nodes[a].a + mesh_.nodes[b].a),
                        0.5 * (mesh_.nodes[a].b + mesh_.nodes[b].b));
    midpoints_.emplace(key, id);
    return id;
  }

  Mesh mesh_;
  std::vector<std::array<int, 3>> tris_;
  std::vector<std::tuple<int, int, BoundaryTag>> bedges_;
  std::map<std::pair<int, int>, int> midpoints_;
};

double tri_area2(const Point2& a, const Point2& b, const Point2& c) {
  return (b.a - a.a) * (c.b - a.b) - (c.a - a.a) * (b.b - a.b);
}

void fill_quality(Mesh& mesh, double cap_limit_s, double far_limit_s) {
  double min_all = 180.0, min_strip = 180.0, max_aspect = 0.0;
  for (const auto& t : mesh.triangles) {
    const Point2& p0 = mesh.nodes[t.v[0]];
    const Point2& p1 = mesh.nodes[t.v[1]];
    const Point2& p2 = mesh.nodes[t.v[2]];
    double e[3] = {std::hypot(p1.a - p0.a, p1.b - p0.b),
                   std::hypot(p2.a - p1.a, p2.b - p1.b),
                   std::hypot(p0.a - p2.a, p0.b - p2.b)};
    double lo = std::min({e[0], e[1], e[2]});
    double hi = std::max({e[0], e[1], e[2]});
    max_aspect = std::max(max_aspect, hi / lo);
    double area2 = std::abs(tri_area2(p0, p1, p2));
    double tri_min = 180.0;
    for (int k = 0; k < 3; ++k) {
      // sin(angle at corner k) = area2 / (adjacent edge product)
      double s = area2 / (e[k] * e[(k + 2) % 3]);
      double ang = std::asin(std::clamp(s, 0.0, 1.0)) * 180.0 / kPi;
      // obtuse angles do not produce the minimum; asin handles them as their
      // supplement, which is fine for a min.
      tri_min = std::min(tri_min, ang);
    }
    min_all = std::min(min_all, tri_min);
    bool in_strip = std::min({p0.a, p1.a, p2.a}) >= cap_limit_s - 1e-9 &&
                    std::max({p0.a, p1.a, p2.a}) <= far_limit_s + 1e-9;
    if (in_strip) min_strip = std::min(min_strip, tri_min);
  }
  mesh.min_angle_deg = min_all;
  mesh.min_angle_strip_deg = min_strip;
  mesh.max_aspect = max_aspect;
}

Mesh build_from_plan(const MeridianDomain& dom, const Plan& plan) {
  const double cot = dom.aperture.cot_theta();
  MeshBuilder b;
  int apex = -1;
  if (plan.has_fan) apex = b.add_vertex(0.0, 0.0);

  // Column nodes, bottom to top; rows sit on the rays u = H(s) j / q.
  std::vector<std::vector<int>> col_nodes(plan.cols.size());
  for (size_t i = 0; i < plan.cols.size(); ++i) {
    double s = plan.cols[i].s;
    int q = plan.cols[i].q;
    double H = std::min(kPi, s * cot);
    col_nodes[i].resize(q + 1);
    for (int j = 0; j <= q; ++j) {
      double u = (j == q) ? H : H * j / q;
      col_nodes[i][j] = b.add_vertex(s, u);
    }
  }

  if (plan.has_fan) {
    const auto& c = col_nodes.front();
    for (size_t j = 0; j + 1 < c.size(); ++j)
      b.add_triangle(apex, c[j], c[j + 1]);
    b.add_boundary(apex, c.front(), BoundaryTag::WallOuter);
    b.add_boundary(apex, c.back(), BoundaryTag::Axis);
  }

  for (size_t i = 0; i + 1 < plan.cols.size(); ++i) {
    const auto& Lc = col_nodes[i];
    const auto& Rc = col_nodes[i + 1];
    int ql = plan.cols[i].q;
    int qr = plan.cols[i + 1].q;
    if (ql == qr) {
      for (int j = 0; j < ql; ++j) {
        b.add_triangle(Lc[j], Rc[j], Rc[j + 1]);
        b.add_triangle(Lc[j], Rc[j + 1], Lc[j + 1]);
      }
    } else if (2 * ql == qr) {  // coarser on the left (cap side)
      for (int j = 0; j < ql; ++j) {
        b.add_triangle(Lc[j], Rc[2 * j], Rc[2 * j + 1]);
        b.add_triangle(Lc[j], Rc[2 * j + 1], Lc[j + 1]);
        b.add_triangle(Lc[j + 1], Rc[2 * j + 1], Rc[2 * j + 2]);
      }
    } else if (ql == 2 * qr) {  // coarser on the right (strip side)
      for (int j = 0; j < qr; ++j) {
        b.add_triangle(Lc[2 * j], Rc[j], Lc[2 * j + 1]);
        b.add_triangle(Lc[2 * j + 1], Rc[j], Rc[j + 1]);
        b.add_triangle(Lc[2 * j + 1], Rc[j + 1], Lc[2 * j + 2]);
      }
    } else {
      throw std::logic_error("mesh plan: non-conforming column pair");
    }
    b.add_boundary(Lc.front(), Rc.front(), BoundaryTag::WallOuter);
    bool on_axis = plan.cols[i + 1].s <= plan.L * (1.0 + 1e-12);
    b.add_boundary(Lc.back(), Rc.back(),
                   on_axis ? BoundaryTag::Axis : BoundaryTag::WallInner);
  }

  const auto& last = col_nodes.back();
  for (size_t j = 0; j + 1 < last.size(); ++j)
    b.add_boundary(last[j], last[j + 1], BoundaryTag::Truncation);

  Mesh mesh = b.finalize();
  fill_quality(mesh, plan.L, plan.far_start);
  return mesh;
}

}  // namespace

double planned_truncation(const Aperture& ap, const MeshParams& params,
                          double s_min) {
  Spacing sp = make_spacing(params);
  double L = ap.tip_s();
  if (!(s_min > L))
    throw std::invalid_argument("planned_truncation: s_min must exceed tip_s");
  auto cols = march_strip(L, sp, params.h, s_min);
  return cols.empty() ? L : cols.back().s;
}

Mesh generate_mesh(const MeridianDomain& domain, const MeshParams& params) {
  Spacing sp = make_spacing(params);
  const double L = domain.tip_s();
  const double cot = domain.aperture.cot_theta();

  Plan plan;
  plan.L = L;
  plan.far_start = far_field_start(L);
  auto cap = march_cap(L, cot, sp, params.h);
  for (auto it = cap.rbegin(); it != cap.rend(); ++it) plan.cols.push_back(*it);
  plan.cols.push_back({L, sp.q_tip});
  plan.has_fan = true;

  auto strip = march_strip(L, sp, params.h, domain.s_max);
  if (strip.empty())
    throw std::invalid_argument("generate_mesh: s_max leaves no strip");
  // Snap the final station to the requested truncation; merge a sliver band.
  if (std::abs(strip.back().s - domain.s_max) > 1e-9) {
    double prev = strip.size() >= 2 ? strip[strip.size() - 2].s : L;
    double w = domain.s_max - prev;
    if (strip.size() >= 2 && w < 0.25 * (strip.back().s - prev)) {
      strip[strip.size() - 2] = strip.back();
      strip.pop_back();
      prev = strip.size() >= 2 ? strip[strip.size() - 2].s : L;
    }
    strip.back().s = domain.s_max;
  }
  for (const auto& c : strip) plan.cols.push_back(c);

  Mesh mesh = build_from_plan(domain, plan);
  validate_mesh(mesh);
  if (mesh.min_angle_strip_deg < params.quality_floor_deg) {
    throw std::runtime_error(
        "generate_mesh: quality floor unattainable; strip min angle " +
        std::to_string(mesh.min_angle_strip_deg) + " deg < " +
        std::to_string(params.quality_floor_deg) + " deg");
  }
  return mesh;
}

Mesh refine_mesh(const Mesh& mesh) {
  MeshBuilder b;
  // Every old node (corner or midpoint) becomes a corner vertex.
  for (const auto& p : mesh.nodes) b.add_vertex(p.a, p.b);
  for (const auto& t : mesh.triangles) {
    b.add_triangle(t.v[0], t.mid[0], t.mid[2]);
    b.add_triangle(t.mid[0], t.v[1], t.mid[1]);
    b.add_triangle(t.mid[2], t.mid[1], t.v[2]);
    b.add_triangle(t.mid[0], t.mid[1], t.mid[2]);
  }
  for (const auto& e : mesh.boundary) {
    b.add_boundary(e.v0, e.mid, e.tag);
    b.add_boundary(e.mid, e.v1, e.tag);
  }
  Mesh fine = b.finalize();
  // Quality is inherited: children of the red split are similar to the parent.
  fine.min_angle_deg = mesh.min_angle_deg;
  fine.min_angle_strip_deg = mesh.min_angle_strip_deg;
  fine.max_aspect = mesh.max_aspect;
  return fine;
}

Mesh build_rectangle_mesh(double a, double b, int nx, int ny,
                          const std::array<BoundaryTag, 4>& tags) {
  if (!(a > 0) || !(b > 0) || nx < 1 || ny < 1)
    throw std::invalid_argument("build_rectangle_mesh: bad arguments");
  MeshBuilder bld;
  auto id = [&](int i, int j) { return i * (ny + 1) + j; };
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j)
      bld.add_vertex(a * i / nx, b * j / ny);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      int n00 = id(i, j), n10 = id(i + 1, j);
      int n11 = id(i + 1, j + 1), n01 = id(i, j + 1);
      bld.add_triangle(n00, n10, n11);
      bld.add_triangle(n00, n11, n01);
    }
  }
  for (int j = 0; j < ny; ++j) {
    bld.add_boundary(id(0, j), id(0, j + 1), tags[0]);
    bld.add_boundary(id(nx, j), id(nx, j + 1), tags[1]);
  }
  for (int i = 0; i < nx; ++i) {
    bld.add_boundary(id(i, 0), id(i + 1, 0), tags[2]);
    bld.add_boundary(id(i, ny), id(i + 1, ny), tags[3]);
  }
  Mesh mesh = bld.finalize();
  fill_quality(mesh, -1e300, 1e300);
  mesh.min_angle_strip_deg = mesh.min_angle_deg;
  return mesh;
}

Mesh build_skew_mesh(double y_max, int ny, int nv) {
  return build_rectangle_mesh(y_max, kPi, ny, nv,
                              {BoundaryTag::Axis, BoundaryTag::Truncation,
                               BoundaryTag::WallOuter, BoundaryTag::WallInner});
}

Mesh map_mesh(const Mesh& mesh, Chart from, Chart to, const Aperture& ap) {
  Mesh out = mesh;
  for (int v = 0; v < mesh.n_vertices; ++v)
    out.nodes[v] = map_point(mesh.nodes[v], from, to, ap);
  // Keep midpoints exact averages of their mapped endpoints.
  for (const auto& t : out.triangles) {
    for (int k = 0; k < 3; ++k) {
      const Point2& p = out.nodes[t.v[k]];
      const Point2& q = out.nodes[t.v[(k + 1) % 3]];
      out.nodes[t.mid[k]] = {0.5 * (p.a + q.a), 0.5 * (p.b + q.b)};
    }
  }
  return out;
}

void validate_mesh(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> edge_count;
  std::map<std::pair<int, int>, int> edge_mid;
  for (const auto& t : mesh.triangles) {
    const Point2& p0 = mesh.nodes[t.v[0]];
    const Point2& p1 = mesh.nodes[t.v[1]];
    const Point2& p2 = mesh.nodes[t.v[2]];
    if (!(tri_area2(p0, p1, p2) > 0.0))
      throw std::runtime_error("validate_mesh: non-positive triangle");
    for (int k = 0; k < 3; ++k) {
      int a = t.v[k], c = t.v[(k + 1) % 3];
      if (a >= mesh.n_vertices || c >= mesh.n_vertices)
        throw std::runtime_error("validate_mesh: corner index out of range");
      auto key = std::minmax(a, c);
      edge_count[key] += 1;
      auto [it, inserted] = edge_mid.emplace(key, t.mid[k]);
      if (!inserted && it->second != t.mid[k])
        throw std::runtime_error("validate_mesh: inconsistent midpoint ids");
      const Point2& pa = mesh.nodes[a];
      const Point2& pc = mesh.nodes[c];
      const Point2& pm = mesh.nodes[t.mid[k]];
      double scale = 1.0 + std::abs(pa.a) + std::abs(pa.b);
      if (std::abs(pm.a - 0.5 * (pa.a + pc.a)) > 1e-12 * scale ||
          std::abs(pm.b - 0.5 * (pa.b + pc.b)) > 1e-12 * scale)
        throw std::runtime_error("validate_mesh: midpoint off edge center");
    }
  }
  std::map<std::pair<int, int>, int> boundary_seen;
  for (const auto& e : mesh.boundary) {
    auto key = std::minmax(e.v0, e.v1);
    auto itc = edge_count.find(key);
    if (itc == edge_count.end() || itc->second != 1)
      throw std::runtime_error("validate_mesh: boundary edge not on one tri");
    auto itm = edge_mid.find(key);
    if (itm == edge_mid.end() || itm->second != e.mid)
      throw std::runtime_error("validate_mesh: boundary midpoint mismatch");
    boundary_seen[key] += 1;
  }
  for (const auto& [key, cnt] : edge_count) {
    if (cnt > 2) throw std::runtime_error("validate_mesh: overshared edge");
    if (cnt == 1 && boundary_seen.find(key) == boundary_seen.end())
      throw std::runtime_error("validate_mesh: untagged boundary edge");
  }
  for (const auto& [key, cnt] : boundary_seen) {
    if (cnt != 1) throw std::runtime_error("validate_mesh: duplicate boundary");
  }
}

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os << "conelayer-mesh v1\n";
  os << mesh.n_vertices << "\n";
  for (int v = 0; v < mesh.n_vertices; ++v)
    os << fmt17(mesh.nodes[v].a) << " " << fmt17(mesh.nodes[v].b) << "\n";
  os << mesh.triangles.size() << "\n";
  for (const auto& t : mesh.triangles) {
    os << t.v[0] << " " << t.v[1] << " " << t.v[2] << " " << t.mid[0] << " "
       << t.mid[1] << " " << t.mid[2] << "\n";
  }
  os << mesh.boundary.size() << "\n";
  for (const auto& e : mesh.boundary)
    os << e.v0 << " " << e.v1 << " " << to_string(e.tag) << "\n";
}

Mesh read_mesh(std::istream& is) {
  std::string header, version;
  is >> header >> version;
  if (header != "conelayer-mesh" || version != "v1")
    throw std::runtime_error("read_mesh: bad header");
  int nv = 0;
  is >> nv;
  if (!is || nv < 3) throw std::runtime_error("read_mesh: bad vertex count");
  Mesh mesh;
  mesh.n_vertices = nv;
  mesh.nodes.resize(nv);
  for (int v = 0; v < nv; ++v) is >> mesh.nodes[v].a >> mesh.nodes[v].b;
  int nt = 0;
  is >> nt;
  mesh.triangles.resize(nt);
  int max_node = nv - 1;
  for (auto& t : mesh.triangles) {
    is >> t.v[0] >> t.v[1] >> t.v[2] >> t.mid[0] >> t.mid[1] >> t.mid[2];
    for (int k = 0; k < 3; ++k) max_node = std::max(max_node, t.mid[k]);
  }
  int nb = 0;
  is >> nb;
  mesh.boundary.resize(nb);
  std::map<std::pair<int, int>, int> edge_mid;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k)
      edge_mid[std::minmax(t.v[k], t.v[(k + 1) % 3])] = t.mid[k];
  for (auto& e : mesh.boundary) {
    std::string tag;
    is >> e.v0 >> e.v1 >> tag;
    e.tag = boundary_tag_from_string(tag);
    auto it = edge_mid.find(std::minmax(e.v0, e.v1));
    if (it == edge_mid.end())
      throw std::runtime_error("read_mesh: boundary edge not in any triangle");
    e.mid = it->second;
  }
  if (!is) throw std::runtime_error("read_mesh: truncated file");
  // Midpoint coordinates are implied: every edge is straight.
  mesh.nodes.resize(max_node + 1);
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const Point2& a = mesh.nodes[t.v[k]];
      const Point2& b = mesh.nodes[t.v[(k + 1) % 3]];
      mesh.nodes[t.mid[k]] = {0.5 * (a.a + b.a), 0.5 * (a.b + b.b)};
    }
  }
  fill_quality(mesh, -1e300, 1e300);
  mesh.min_angle_strip_deg = mesh.min_angle_deg;
  return mesh;
}

}  // namespace conelayer
