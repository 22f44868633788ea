#include "conelayer/assembly.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "conelayer/p2.hpp"
#include "conelayer/quadrature.hpp"

namespace conelayer {

Eigen::VectorXd SparseSymmetric::apply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(upper.rows());
  for (int i = 0; i < upper.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(upper,
                                                                        i);
         it; ++it) {
      int j = static_cast<int>(it.col());
      y[i] += it.value() * x[j];
      if (j != i) y[j] += it.value() * x[i];
    }
  }
  return y;
}

Eigen::SparseMatrix<double> SparseSymmetric::upper_col() const {
  return Eigen::SparseMatrix<double>(upper);
}

Eigen::SparseMatrix<double> SparseSymmetric::full() const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * upper.nonZeros());
  for (int i = 0; i < upper.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(upper,
                                                                        i);
         it; ++it) {
      trips.emplace_back(i, it.col(), it.value());
      if (it.col() != i) trips.emplace_back(it.col(), i, it.value());
    }
  }
  Eigen::SparseMatrix<double> f(upper.rows(), upper.cols());
  f.setFromTriplets(trips.begin(), trips.end());
  return f;
}

Eigen::MatrixXd SparseSymmetric::dense() const {
  return Eigen::MatrixXd(full());
}

Eigen::VectorXd AssembledSystem::expand(
    const Eigen::VectorXd& free_values) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dof_map.size());
  for (size_t n = 0; n < dof_map.size(); ++n)
    if (dof_map[n] != kConstrained) out[n] = free_values[dof_map[n]];
  return out;
}

Eigen::VectorXd AssembledSystem::restrict_to_free(
    const Eigen::VectorXd& node_values) const {
  Eigen::VectorXd out(n_free);
  for (int f = 0; f < n_free; ++f) out[f] = node_values[free_nodes[f]];
  return out;
}

std::set<BoundaryTag> dirichlet_tags_for(int m) {
  std::set<BoundaryTag> tags = {BoundaryTag::WallOuter, BoundaryTag::WallInner,
                                BoundaryTag::Truncation};
  if (m != 0) tags.insert(BoundaryTag::Axis);
  return tags;
}

namespace {

std::vector<int> build_dof_map(const Mesh& mesh,
                               const std::set<BoundaryTag>& tags,
                               const std::vector<int>* already_constrained) {
  std::vector<char> fixed(mesh.node_count(), 0);
  if (already_constrained) {
    for (size_t n = 0; n < already_constrained->size(); ++n)
      if ((*already_constrained)[n] == kConstrained) fixed[n] = 1;
  }
  for (const auto& e : mesh.boundary) {
    if (tags.count(e.tag)) fixed[e.v0] = fixed[e.v1] = fixed[e.mid] = 1;
  }
  std::vector<int> dof(mesh.node_count());
  int next = 0;
  for (int n = 0; n < mesh.node_count(); ++n)
    dof[n] = fixed[n] ? kConstrained : next++;
  return dof;
}

void finish_dof_fields(AssembledSystem& sys) {
  sys.free_nodes.clear();
  for (size_t n = 0; n < sys.dof_map.size(); ++n)
    if (sys.dof_map[n] != kConstrained)
      sys.free_nodes.push_back(static_cast<int>(n));
  sys.n_free = static_cast<int>(sys.free_nodes.size());
}

// Per-element coefficient evaluation for both formulations.  `aniso` is the
// constant gradient coefficient matrix; the weight multiplies everything.
struct FormCoefficients {
  double c11 = 1.0, c22 = 1.0, c12 = 0.0;  // grad phi_i^T C grad phi_j
  double potential = 0.0;                  // m^2 -> potential / r^2 term
};

AssembledSystem assemble_p2(const Mesh& mesh, const WeightFn& weight,
                            const FormCoefficients& co, int m,
                            Formulation formulation,
                            const std::set<BoundaryTag>& tags) {
  AssembledSystem sys;
  sys.m = m;
  sys.formulation = formulation;
  sys.dof_map = build_dof_map(mesh, tags, nullptr);
  finish_dof_fields(sys);
  if (sys.n_free == 0) throw std::runtime_error("assemble: empty system");

  const bool has_potential = co.potential != 0.0;

  // Elements touching the zero line of the weight need the richer rule when
  // the 1/r^2 potential is present.
  std::vector<char> near_axis(mesh.triangle_count(), 0);
  if (has_potential) {
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      for (int k = 0; k < 3; ++k) {
        const Point2& p = mesh.nodes[mesh.triangles[t].v[k]];
        if (std::abs(weight(p.a, p.b)) < 1e-9) near_axis[t] = 1;
      }
    }
  }

  std::vector<Eigen::Triplet<double>> ta, tb;
  ta.reserve(mesh.triangle_count() * 21);
  tb.reserve(mesh.triangle_count() * 21);

  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point2& p0 = mesh.nodes[tri.v[0]];
    const Point2& p1 = mesh.nodes[tri.v[1]];
    const Point2& p2v = mesh.nodes[tri.v[2]];
    const double j11 = p1.a - p0.a, j12 = p2v.a - p0.a;
    const double j21 = p1.b - p0.b, j22 = p2v.b - p0.b;
    const double det = j11 * j22 - j12 * j21;
    if (!(det > 0.0))
      throw std::runtime_error("assemble: degenerate element " +
                               std::to_string(t));
    // rows of inv(J)^T
    const double i11 = j22 / det, i12 = -j21 / det;
    const double i21 = -j12 / det, i22 = j11 / det;

    const QuadratureRule& rule =
        near_axis[t] ? triangle_rule_deg8() : triangle_rule_deg5();

    double Ae[6][6] = {};
    double Be[6][6] = {};
    for (const auto& node : rule.nodes) {
      auto N = p2::shape(node.bary);
      auto dN = p2::shape_grad(node.bary);
      double gx[6], gy[6];
      for (int a = 0; a < 6; ++a) {
        gx[a] = i11 * dN[a][0] + i12 * dN[a][1];
        gy[a] = i21 * dN[a][0] + i22 * dN[a][1];
      }
      const double x = p0.a + j11 * node.bary[1] + j12 * node.bary[2];
      const double y = p0.b + j21 * node.bary[1] + j22 * node.bary[2];
      const double w = weight(x, y);
      const double scale = node.weight * det;
      double pot = 0.0;
      if (has_potential) {
        if (!(w > 0.0))
          throw std::runtime_error(
              "assemble: quadrature point on or past the axis with m != 0 "
              "(element " +
              std::to_string(t) + ")");
        pot = co.potential / (w * w);
      }
      for (int a = 0; a < 6; ++a) {
        for (int b = a; b < 6; ++b) {
          double grad = co.c11 * gx[a] * gx[b] + co.c22 * gy[a] * gy[b] +
                        co.c12 * (gx[a] * gy[b] + gy[a] * gx[b]);
          double mass = N[a] * N[b];
          Ae[a][b] += scale * w * (grad + pot * mass);
          Be[a][b] += scale * w * mass;
        }
      }
      if (!std::isfinite(Ae[0][0]) || !std::isfinite(Be[0][0]))
        throw std::runtime_error("assemble: non-finite entry in element " +
                                 std::to_string(t));
    }

    int gl[6] = {tri.v[0],   tri.v[1],   tri.v[2],
                 tri.mid[0], tri.mid[1], tri.mid[2]};
    for (int a = 0; a < 6; ++a) {
      int ga = sys.dof_map[gl[a]];
      if (ga == kConstrained) continue;
      for (int b = a; b < 6; ++b) {
        int gb = sys.dof_map[gl[b]];
        if (gb == kConstrained) continue;
        int i = std::min(ga, gb), j = std::max(ga, gb);
        ta.emplace_back(i, j, Ae[a][b]);
        tb.emplace_back(i, j, Be[a][b]);
      }
    }
  }

  sys.A.upper.resize(sys.n_free, sys.n_free);
  sys.A.upper.setFromTriplets(ta.begin(), ta.end());
  sys.B.upper.resize(sys.n_free, sys.n_free);
  sys.B.upper.setFromTriplets(tb.begin(), tb.end());
  return sys;
}

}  // namespace

AssembledSystem assemble_weighted(const Mesh& mesh, const Aperture& ap, int m,
                                  const WeightFn* weight_override) {
  WeightFn w = weight_override
                   ? *weight_override
                   : WeightFn([ap](double s, double u) {
                       return weight_r({s, u}, ap);
                     });
  FormCoefficients co;
  co.potential = static_cast<double>(m) * m;
  return assemble_p2(mesh, w, co, m, Formulation::WeightedSU,
                     dirichlet_tags_for(m));
}

AssembledSystem assemble_weighted_raw(const Mesh& mesh, const Aperture& ap,
                                      int m, const WeightFn* weight_override) {
  WeightFn w = weight_override
                   ? *weight_override
                   : WeightFn([ap](double s, double u) {
                       return weight_r({s, u}, ap);
                     });
  FormCoefficients co;
  co.potential = static_cast<double>(m) * m;
  return assemble_p2(mesh, w, co, m, Formulation::WeightedSU, {});
}

AssembledSystem apply_dirichlet(const AssembledSystem& sys, const Mesh& mesh,
                                const std::set<BoundaryTag>& tags) {
  AssembledSystem out;
  out.m = sys.m;
  out.formulation = sys.formulation;
  out.dof_map = build_dof_map(mesh, tags, &sys.dof_map);
  finish_dof_fields(out);
  if (out.n_free == 0) throw std::runtime_error("apply_dirichlet: empty system");

  // old free index -> new free index
  std::vector<int> remap(sys.n_free, kConstrained);
  for (int f = 0; f < sys.n_free; ++f) {
    int node = sys.free_nodes[f];
    remap[f] = out.dof_map[node];
  }
  auto filter = [&](const SparseSymmetric& in) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(in.upper.nonZeros());
    for (int i = 0; i < in.upper.outerSize(); ++i) {
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
               in.upper, i);
           it; ++it) {
        int ni = remap[i], nj = remap[it.col()];
        if (ni == kConstrained || nj == kConstrained) continue;
        trips.emplace_back(std::min(ni, nj), std::max(ni, nj), it.value());
      }
    }
    SparseSymmetric m2;
    m2.upper.resize(out.n_free, out.n_free);
    m2.upper.setFromTriplets(trips.begin(), trips.end());
    return m2;
  };
  out.A = filter(sys.A);
  out.B = filter(sys.B);
  return out;
}

AssembledSystem assemble_skew_on(const Mesh& yv_mesh, const Aperture& ap) {
  const double c = ap.cos_theta();
  FormCoefficients co;
  co.c11 = 1.0 / (c * c);
  co.c22 = 1.0;
  co.c12 = -ap.tan_theta();
  // The gradient coefficient matrix [[c11, c12], [c12, c22]] must stay
  // positive definite: the form is a rotated Laplacian.
  if (!(co.c11 > 0.0) || !(co.c11 * co.c22 - co.c12 * co.c12 > 0.0))
    throw std::logic_error("assemble_skew: coefficient matrix not PD");
  WeightFn w = [c](double y, double /*v*/) { return y * c; };
  return assemble_p2(yv_mesh, w, co, 0, Formulation::SkewYV,
                     dirichlet_tags_for(0));
}

AssembledSystem assemble_skew(const Aperture& ap, double y_max, int ny,
                              int nv) {
  if (!(y_max > 0)) throw std::invalid_argument("assemble_skew: y_max <= 0");
  Mesh mesh = build_skew_mesh(y_max, ny, nv);
  return assemble_skew_on(mesh, ap);
}

void write_matrix(std::ostream& os, const SparseSymmetric& mat) {
  os << "conelayer-matrix v1 " << mat.dim() << " " << mat.stored_nonzeros()
     << " sym\n";
  char buf[40];
  for (int i = 0; i < mat.upper.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
             mat.upper, i);
         it; ++it) {
      std::snprintf(buf, sizeof buf, "%.17g", it.value());
      os << (i + 1) << " " << (it.col() + 1) << " " << buf << "\n";
    }
  }
}

SparseSymmetric read_matrix(std::istream& is) {
  std::string header, version, sym;
  long dim = 0, nnz = 0;
  is >> header >> version >> dim >> nnz >> sym;
  if (header != "conelayer-matrix" || version != "v1" || sym != "sym")
    throw std::runtime_error("read_matrix: bad header");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  for (long k = 0; k < nnz; ++k) {
    long i = 0, j = 0;
    double v = 0;
    is >> i >> j >> v;
    if (!is) throw std::runtime_error("read_matrix: truncated file");
    if (i < 1 || j < i || j > dim)
      throw std::runtime_error("read_matrix: entry outside upper triangle");
    trips.emplace_back(i - 1, j - 1, v);
  }
  SparseSymmetric m;
  m.upper.resize(dim, dim);
  m.upper.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace conelayer
