#pragma once

#include <array>
#include <vector>

namespace conelayer {

// Symmetric quadrature rule on the reference triangle
// {(x,y): x >= 0, y >= 0, x + y <= 1}.  Points are stored in barycentric
// coordinates (l1, l2, l3), l3 = 1 - l1 - l2; weights are positive and sum to
// the reference-triangle area 1/2.  All points are strictly interior.
struct QuadratureRule {
  struct Node {
    std::array<double, 3> bary;
    double weight;
  };
  std::vector<Node> nodes;
  int exactness = 0;  // polynomial degree integrated exactly
};

// 7-point rule, exact through degree 5.
const QuadratureRule& triangle_rule_deg5();

// 16-point rule, exact through degree 8 (used where integrands are not
// polynomial, e.g. the m^2/r^2 potential on axis-adjacent elements).
const QuadratureRule& triangle_rule_deg8();

}  // namespace conelayer
