#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <iosfwd>
#include <set>
#include <vector>

#include "conelayer/mesh.hpp"

namespace conelayer {

// Symmetric sparse matrix storing the upper triangle (diagonal included) in
// compressed sparse row layout.  Assembly is exact: no entries are dropped.
struct SparseSymmetric {
  Eigen::SparseMatrix<double, Eigen::RowMajor> upper;

  int dim() const { return static_cast<int>(upper.rows()); }
  Eigen::Index stored_nonzeros() const { return upper.nonZeros(); }

  // y = A x using the implied full symmetric matrix.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  // Column-major copies for factorizations and dense oracles.
  Eigen::SparseMatrix<double> upper_col() const;
  Eigen::SparseMatrix<double> full() const;
  Eigen::MatrixXd dense() const;
};

enum class Formulation { WeightedSU, SkewYV };

inline constexpr int kConstrained = -1;

// Generalized eigenproblem pencil (A, B) over the free degrees of freedom of
// a P2 mesh, together with the node-to-free-index map.
struct AssembledSystem {
  SparseSymmetric A;  // stiffness (+ potential for m != 0)
  SparseSymmetric B;  // mass
  std::vector<int> dof_map;    // node -> free index or kConstrained
  std::vector<int> free_nodes; // free index -> node
  int n_free = 0;
  int m = 0;
  Formulation formulation = Formulation::WeightedSU;

  // Scatter free-dof coefficients to all mesh nodes (zero on constrained).
  Eigen::VectorXd expand(const Eigen::VectorXd& free_values) const;
  Eigen::VectorXd restrict_to_free(const Eigen::VectorXd& node_values) const;
};

using WeightFn = std::function<double(double s, double u)>;

// Dirichlet pieces for angular wavenumber m: all walls and the truncation;
// the axis only when m != 0 (for m = 0 the vanishing weight makes the axis a
// natural boundary).
std::set<BoundaryTag> dirichlet_tags_for(int m);

// Weighted partial-wave forms on an SU mesh:
//   A_ij = Int r (grad phi_i . grad phi_j + (m^2/r^2) phi_i phi_j) ds du
//   B_ij = Int r phi_i phi_j ds du,        r = s cos(theta) - u sin(theta).
// Gradients in SU equal gradients in RZ (the chart is a rotation).  The
// degree-5 rule integrates the polynomial terms exactly; axis-adjacent
// elements use a degree-8 rule when the m^2/r^2 potential is present.
// weight_override replaces r (for oracle problems, e.g. unit weight).
AssembledSystem assemble_weighted(const Mesh& mesh, const Aperture& ap, int m,
                                  const WeightFn* weight_override = nullptr);

// Same forms with no Dirichlet constraints applied (identity dof map).
AssembledSystem assemble_weighted_raw(const Mesh& mesh, const Aperture& ap,
                                      int m,
                                      const WeightFn* weight_override = nullptr);

// Eliminates the nodes on the tagged boundary pieces from an existing system
// (rows and columns removed; A, B stay symmetric).  Throws when nothing
// remains free.
AssembledSystem apply_dirichlet(const AssembledSystem& sys, const Mesh& mesh,
                                const std::set<BoundaryTag>& tags);

// m = 0 weighted form transplanted to the skew half-strip (0,y_max)x(0,pi).
// With y = s - u tan(theta), v = u one has r = y cos(theta), dy dv = ds du,
// and the gradient transforms to give the anisotropic integrand
//   y cos(theta) [ (1/cos^2) |psi_y|^2 + |psi_v|^2
//                  - 2 tan(theta) Re(psi_y psi_v) ],
// which is positive semidefinite (det of the coefficient matrix is 1).
// Dirichlet on v = 0, v = pi and y = y_max; natural at y = 0.
AssembledSystem assemble_skew(const Aperture& ap, double y_max, int ny, int nv);

// Same, on a caller-provided mesh in YV coordinates.
AssembledSystem assemble_skew_on(const Mesh& yv_mesh, const Aperture& ap);

// Plain-text coordinate export, header `conelayer-matrix v1 dim nnz sym`,
// then 1-based `i j value` triples of the upper triangle.
void write_matrix(std::ostream& os, const SparseSymmetric& mat);
SparseSymmetric read_matrix(std::istream& is);

}  // namespace conelayer
