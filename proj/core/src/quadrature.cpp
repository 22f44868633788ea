#include "conelayer/quadrature.hpp"

#include <cmath>

namespace conelayer {

namespace {

void push_central(QuadratureRule& rule, double w) {
  rule.nodes.push_back({{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, w});
}

// Orbit of (a, b, b) under coordinate permutations: 3 points.
void push_orbit3(QuadratureRule& rule, double a, double w) {
  double b = (1.0 - a) / 2.0;
  rule.nodes.push_back({{a, b, b}, w});
  rule.nodes.push_back({{b, a, b}, w});
  rule.nodes.push_back({{b, b, a}, w});
}

// Orbit of (a, b, c) with distinct entries: 6 points.
void push_orbit6(QuadratureRule& rule, double a, double b, double w) {
  double c = 1.0 - a - b;
  rule.nodes.push_back({{a, b, c}, w});
  rule.nodes.push_back({{a, c, b}, w});
  rule.nodes.push_back({{b, a, c}, w});
  rule.nodes.push_back({{b, c, a}, w});
  rule.nodes.push_back({{c, a, b}, w});
  rule.nodes.push_back({{c, b, a}, w});
}

QuadratureRule make_deg5() {
  QuadratureRule rule;
  rule.exactness = 5;
  const double s15 = std::sqrt(15.0);
  // Radon's rule; weights below are normalized to sum to 1 and scaled by the
  // reference area 1/2 at the end.
  push_central(rule, 9.0 / 40.0);
  push_orbit3(rule, (9.0 - 2.0 * s15) / 21.0, (155.0 + s15) / 1200.0);
  push_orbit3(rule, (9.0 + 2.0 * s15) / 21.0, (155.0 - s15) / 1200.0);
  for (auto& n : rule.nodes) n.weight *= 0.5;
  return rule;
}

QuadratureRule make_deg8() {
  QuadratureRule rule;
  rule.exactness = 8;
  // 16-point degree-8 rule (Dunavant's orbit structure); the parameters are
  // polished so every monomial moment through degree 8 holds to ~1e-16.
  // All weights positive, all points strictly interior.
  push_central(rule, 0.14431560767764148);
  push_orbit3(rule, 0.081414823414754686, 0.095091634267380556);
  push_orbit3(rule, 0.65886138449671128, 0.10321737053474249);
  push_orbit3(rule, 0.89890554336593043, 0.032458497623211943);
  push_orbit6(rule, 0.0083947774098024047, 0.26311282963498445,
              0.02723031417439228);
  for (auto& n : rule.nodes) n.weight *= 0.5;
  return rule;
}

}  // namespace

const QuadratureRule& triangle_rule_deg5() {
  static const QuadratureRule rule = make_deg5();
  return rule;
}

const QuadratureRule& triangle_rule_deg8() {
  static const QuadratureRule rule = make_deg8();
  return rule;
}

}  // namespace conelayer
