#pragma once

#include <array>

namespace conelayer::p2 {

// Quadratic Lagrange basis on the reference triangle in barycentric
// coordinates (l1, l2, l3).  Local node order matches Mesh::Tri: corners
// v0,v1,v2 then midpoints of edges (v0,v1), (v1,v2), (v2,v0).
inline std::array<double, 6> shape(const std::array<double, 3>& l) {
  return {l[0] * (2 * l[0] - 1), l[1] * (2 * l[1] - 1), l[2] * (2 * l[2] - 1),
          4 * l[0] * l[1],       4 * l[1] * l[2],       4 * l[2] * l[0]};
}

// Gradients with respect to the reference coordinates (xi, eta), where
// l = (1 - xi - eta, xi, eta).
inline std::array<std::array<double, 2>, 6> shape_grad(
    const std::array<double, 3>& l) {
  const double g1[2] = {-1.0, -1.0};
  const double g2[2] = {1.0, 0.0};
  const double g3[2] = {0.0, 1.0};
  std::array<std::array<double, 2>, 6> d{};
  for (int c = 0; c < 2; ++c) {
    d[0][c] = (4 * l[0] - 1) * g1[c];
    d[1][c] = (4 * l[1] - 1) * g2[c];
    d[2][c] = (4 * l[2] - 1) * g3[c];
    d[3][c] = 4 * (l[1] * g1[c] + l[0] * g2[c]);
    d[4][c] = 4 * (l[2] * g2[c] + l[1] * g3[c]);
    d[5][c] = 4 * (l[0] * g3[c] + l[2] * g1[c]);
  }
  return d;
}

}  // namespace conelayer::p2
