#include "conelayer/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "conelayer/oracles.hpp"

namespace conelayer {

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

struct Canvas {
  std::ofstream os;
  double width, height;

  Canvas(const std::string& path, double w, double h) : width(w), height(h) {
    os.open(path);
    if (!os) throw std::runtime_error("svg: cannot open " + path);
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w)
       << "\" height=\"" << num(h) << "\" viewBox=\"0 0 " << num(w) << " "
       << num(h) << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << num(w) << "\" height=\""
       << num(h) << "\" fill=\"white\"/>\n";
  }
  ~Canvas() { os << "</svg>\n"; }

  void polyline(const std::vector<std::pair<double, double>>& pts,
                const std::string& stroke, double stroke_width,
                const std::string& cls = "") {
    if (pts.size() < 2) return;
    os << "<polyline fill=\"none\" stroke=\"" << stroke
       << "\" stroke-width=\"" << num(stroke_width) << "\"";
    if (!cls.empty()) os << " class=\"" << cls << "\"";
    os << " points=\"";
    for (const auto& [x, y] : pts) os << num(x) << "," << num(y) << " ";
    os << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2,
            const std::string& stroke, double w, const std::string& dash = "") {
    os << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\""
       << num(x2) << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke
       << "\" stroke-width=\"" << num(w) << "\"";
    if (!dash.empty()) os << " stroke-dasharray=\"" << dash << "\"";
    os << "/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    os << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\""
       << num(r) << "\" fill=\"" << fill << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12) {
    os << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\""
       << size << "\" font-family=\"sans-serif\">" << s << "</text>\n";
  }
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#e377c2",
                          "#7f7f7f", "#bcbd22"};

}  // namespace

void write_sweep_svg(const std::string& path, const SweepResult& sweep) {
  const double W = 640, H = 480, ml = 60, mr = 20, mt = 20, mb = 50;
  Canvas cv(path, W, H);

  double bmin = 1e300, bmax = -1e300;
  for (const auto& e : sweep.entries) {
    bmin = std::min(bmin, e.beta_deg);
    bmax = std::max(bmax, e.beta_deg);
  }
  if (!(bmax > bmin)) {
    bmin -= 0.5;
    bmax += 0.5;
  }
  double lmin = 0.5, lmax = 1.05;
  auto X = [&](double beta) {
    return ml + (beta - bmin) / (bmax - bmin) * (W - ml - mr);
  };
  auto Y = [&](double lam) {
    return H - mb - (lam - lmin) / (lmax - lmin) * (H - mt - mb);
  };

  // threshold line at lambda = 1
  cv.line(ml, Y(1.0), W - mr, Y(1.0), "#444444", 1.0, "4,3");
  cv.text(W - mr - 90, Y(1.0) - 5, "threshold 1");
  // axes
  cv.line(ml, mt, ml, H - mb, "black", 1.0);
  cv.line(ml, H - mb, W - mr, H - mb, "black", 1.0);
  cv.text(W / 2 - 30, H - 12, "beta [deg]");
  cv.text(8, mt + 10, "lambda");

  for (int j = 0; j < sweep.branch_count; ++j) {
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < sweep.entries.size(); ++i) {
      double lam = sweep.branch(static_cast<int>(i), j);
      if (std::isnan(lam)) continue;
      pts.emplace_back(X(sweep.entries[i].beta_deg), Y(lam));
    }
    if (pts.size() == 1) {
      cv.circle(pts[0].first, pts[0].second, 2.5, kPalette[j % 10]);
    } else {
      cv.polyline(pts, kPalette[j % 10], 1.6, "branch");
    }
  }

  // lambda0 marked with a thick dot on the value axis.
  double l0 = oracles::lambda0();
  cv.circle(ml, Y(l0), 5.0, "black");
  cv.text(ml + 8, Y(l0) + 4, "lambda0");
}

void write_mode_svg(const std::string& path, const Mesh& mesh,
                    const Aperture& ap, const Eigen::VectorXd& node_values,
                    int contour_levels, double vertical_scale) {
  if (contour_levels < 1) contour_levels = 1;
  double zmax = 0, rmax = 0;
  for (int v = 0; v < mesh.n_vertices; ++v) {
    Point2 rz = map_point(mesh.nodes[v], Chart::SU, Chart::RZ, ap);
    zmax = std::max(zmax, rz.b);
    rmax = std::max(rmax, rz.a);
  }
  const double W = 860, H = 300, ml = 50, mr = 15, mt = 15, mb = 40;
  Canvas cv(path, W, H);
  // z runs along the horizontal axis, r along the (optionally stretched)
  // vertical one.
  double r_draw = rmax / vertical_scale;
  auto X = [&](double z) { return ml + z / zmax * (W - ml - mr); };
  auto Y = [&](double r) {
    return H - mb - (r / vertical_scale) / std::max(r_draw, 1e-300) *
                        (H - mt - mb);
  };
  cv.line(ml, H - mb, W - mr, H - mb, "black", 1.0);
  cv.line(ml, mt, ml, H - mb, "black", 1.0);
  cv.text(W / 2 - 10, H - 10, "z");
  cv.text(12, mt + 12, "r");

  double vmax = node_values.cwiseAbs().maxCoeff();
  auto to_screen = [&](const std::vector<std::vector<Point2>>& lines,
                       const std::string& color, double width,
                       const std::string& cls) {
    for (const auto& pl : lines) {
      std::vector<std::pair<double, double>> pts;
      pts.reserve(pl.size());
      for (const Point2& p : pl) {
        Point2 rz = map_point(p, Chart::SU, Chart::RZ, ap);
        pts.emplace_back(X(rz.b), Y(rz.a));
      }
      cv.polyline(pts, color, width, cls);
    }
  };

  for (int l = 1; l <= contour_levels; ++l) {
    double frac = static_cast<double>(l) / (contour_levels + 1);
    double level = frac * vmax;
    to_screen(level_set(mesh, node_values, level), kPalette[l % 10], 0.8,
              "contour");
    to_screen(level_set(mesh, node_values, -level), kPalette[(l + 5) % 10],
              0.8, "contour");
  }
  // Nodal lines in black on top.
  to_screen(level_set(mesh, node_values, 0.0), "black", 1.6, "nodal");
}

void write_profiles_svg(const std::string& path,
                        const std::vector<Profile>& profiles) {
  const double W = 720, H = 420, ml = 55, mr = 15, mt = 15, mb = 45;
  Canvas cv(path, W, H);
  double zmax = 0, pmax = 0;
  for (const auto& p : profiles) {
    if (!p.z.empty()) zmax = std::max(zmax, p.z.back());
    for (double v : p.psi2_max) pmax = std::max(pmax, v);
  }
  if (!(zmax > 0)) zmax = 1;
  if (!(pmax > 0)) pmax = 1;
  auto X = [&](double z) { return ml + z / zmax * (W - ml - mr); };
  auto Y = [&](double v) { return H - mb - v / pmax * (H - mt - mb); };
  cv.line(ml, H - mb, W - mr, H - mb, "black", 1.0);
  cv.line(ml, mt, ml, H - mb, "black", 1.0);
  cv.text(W / 2 - 10, H - 10, "z");
  cv.text(8, mt + 12, "|psi|^2");
  for (size_t m = 0; m < profiles.size(); ++m) {
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < profiles[m].z.size(); ++i)
      pts.emplace_back(X(profiles[m].z[i]), Y(profiles[m].psi2_max[i]));
    cv.polyline(pts, kPalette[m % 10], 1.4, "profile");
    cv.text(W - mr - 60, mt + 16 * (static_cast<int>(m) + 1),
            "mode " + std::to_string(m + 1));
  }
}

}  // namespace conelayer
