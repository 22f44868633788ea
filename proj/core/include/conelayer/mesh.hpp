#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "conelayer/geometry.hpp"

namespace conelayer {

// Conforming triangular mesh with quadratic (P2) elements.  Nodes
// [0, n_vertices) are triangle corners, nodes [n_vertices, node_count()) are
// edge midpoints.  Every edge is straight, so midpoint nodes are exact
// averages of their endpoints.
struct Mesh {
  struct Tri {
    std::array<int, 3> v;    // corner vertices, counter-clockwise
    std::array<int, 3> mid;  // mid[k] is the midpoint of edge (v[k], v[(k+1)%3])
  };
  struct BoundaryEdge {
    int v0;
    int v1;
    int mid;
    BoundaryTag tag;
  };

  std::vector<Point2> nodes;
  int n_vertices = 0;
  std::vector<Tri> triangles;
  std::vector<BoundaryEdge> boundary;

  // Element quality statistics, filled by the generators.
  double min_angle_deg = 0.0;        // over all triangles
  // excluding the anisotropic cap wedge and the stretched far-field cells
  double min_angle_strip_deg = 0.0;
  double max_aspect = 0.0;           // longest/shortest edge

  int node_count() const { return static_cast<int>(nodes.size()); }
  int vertex_count() const { return n_vertices; }
  int triangle_count() const { return static_cast<int>(triangles.size()); }
  // Number of scalar P2 degrees of freedom before boundary elimination.
  int dof_count() const { return node_count(); }
};

struct MeshParams {
  double h = 0.25;         // target edge length
  double grading = 4.0;    // tip-refinement factor: local edges <= ~h/grading
  double quality_floor_deg = 15.0;  // enforced away from the cap wedge
};

// Structured mesh of the truncated meridian domain.  Columns of nodes sit on
// vertical stations; node rows follow the rays u = (s cot theta) j/q so all
// boundary vertices lie exactly on the domain boundary.  The interval count q
// per column is a power of two and coarsens toward the cap apex through
// conforming 2:1 transition bands; near the inner-cone tip both directions
// are refined so that local edge lengths are <= ~h/grading.
//
// Quality: triangles in the half-strip part up to the far-field zone satisfy
// the min-angle floor.  In the cap the elements are anisotropic and aligned
// with the wedge (the domain corner at the apex makes a global floor
// impossible); beyond a few tip lengths the strip cells stretch along s to
// follow the purely exponential decay of the bound states.  Both minima are
// reported in the Mesh.
Mesh generate_mesh(const MeridianDomain& domain, const MeshParams& params);

// First natural truncation station >= s_min for the given parameters.  Using
// build_domain(ap, planned_truncation(...)) makes meshes for successive
// doublings of s_max exactly nested along the strip.
double planned_truncation(const Aperture& ap, const MeshParams& params,
                          double s_min);

// Red refinement: every triangle splits into four congruent children using
// its edge midpoints; boundary tags are inherited.  The coarse P2 space is a
// subspace of the refined one.
Mesh refine_mesh(const Mesh& mesh);

// Axis-aligned rectangle (0,a) x (0,b) meshed with an nx-by-ny grid, each
// cell split into two triangles.  Tags apply to {left, right, bottom, top}.
Mesh build_rectangle_mesh(double a, double b, int nx, int ny,
                          const std::array<BoundaryTag, 4>& tags);

// Rectangle mesh of the skew-coordinate half-strip (0, y_max) x (0, pi) with
// the tags the meridian problem induces there: y=0 is the axis image, v=0 and
// v=pi are the walls, y=y_max the truncation.
Mesh build_skew_mesh(double y_max, int ny, int nv);

// Returns an affine image of `mesh` with every node mapped between charts.
Mesh map_mesh(const Mesh& mesh, Chart from, Chart to, const Aperture& ap);

// Structural validation: conformity (interior edges shared by exactly two
// triangles, boundary edges by one and tagged), positive orientation,
// midpoint consistency.  Throws std::runtime_error on violation.
void validate_mesh(const Mesh& mesh);

// Plain-text mesh format `conelayer-mesh v1`.
void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);

}  // namespace conelayer
