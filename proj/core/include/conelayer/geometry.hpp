#pragma once

#include <cmath>
#include <string>

namespace conelayer {

inline constexpr double kPi = 3.14159265358979323846;

// Coordinate charts on the meridian half-plane.
//   RZ : cylindrical radius r >= 0 and axial coordinate z.
//   SU : rotated coordinates, s = r cos(theta) + z sin(theta),
//        u = -r sin(theta) + z cos(theta).  The layer walls become u = const.
//   YV : skew coordinates, y = s - u tan(theta), v = u.  The meridian domain
//        becomes the half-strip y > 0, 0 < v < pi; dy dv = ds du.
enum class Chart { RZ, SU, YV };

struct Point2 {
  double a = 0.0;  // first coordinate of the chart (r, s or y)
  double b = 0.0;  // second coordinate of the chart (z, u or v)
};

// Cone half-opening parameter.  theta is the angle between the cone walls and
// the plane perpendicular to the symmetry axis; beta = pi/2 - theta is the
// half-aperture measured from the axis itself (the convention natural for
// figures).  Exactly one of the two is supplied, the other is derived, and
// beta = pi/2 - theta holds exactly.
class Aperture {
 public:
  static Aperture from_theta(double theta_rad);
  static Aperture from_beta(double beta_rad);
  static Aperture from_theta_deg(double theta_deg);
  static Aperture from_beta_deg(double beta_deg);

  double theta() const { return theta_; }
  double beta() const { return kPi / 2 - theta_; }
  double theta_deg() const { return theta_ * 180.0 / kPi; }
  double beta_deg() const { return beta() * 180.0 / kPi; }

  double cos_theta() const { return cos_; }
  double sin_theta() const { return sin_; }
  double tan_theta() const { return sin_ / cos_; }
  double cot_theta() const { return cos_ / sin_; }

  // s-coordinate of the inner cone tip, pi * tan(theta).
  double tip_s() const { return kPi * tan_theta(); }
  // z-coordinate of the inner cone tip, pi / cos(theta); its r is 0.
  double tip_z() const { return kPi / cos_; }

 private:
  explicit Aperture(double theta_rad);
  double theta_;
  double cos_;
  double sin_;
};

Point2 map_point(const Point2& p, Chart from, Chart to, const Aperture& ap);

// Cylindrical radius of an SU point, r = s cos(theta) - u sin(theta).
// Vanishes exactly on the symmetry axis u = s cot(theta).
double weight_r(const Point2& su, const Aperture& ap);

enum class BoundaryTag { WallOuter, WallInner, Axis, Truncation };

const char* to_string(BoundaryTag tag);
BoundaryTag boundary_tag_from_string(const std::string& s);

// Truncated meridian domain
//   { (s,u) : 0 <= s <= s_max, 0 < u < min(pi, s cot(theta)) }
// with boundary pieces
//   WallOuter   u = 0
//   WallInner   u = pi,          s >= pi tan(theta)
//   Axis        u = s cot(theta), s <= pi tan(theta)   (r = 0 there)
//   Truncation  s = s_max.
struct MeridianDomain {
  Aperture aperture;
  double s_max;

  double tip_s() const { return aperture.tip_s(); }
  double tip_z() const { return aperture.tip_z(); }
  // Upper boundary of the u-range at abscissa s.
  double u_top(double s) const {
    return std::min(kPi, s * aperture.cot_theta());
  }
  bool contains(const Point2& su, double tol = 1e-12) const;
};

// Throws std::invalid_argument when s_max <= pi tan(theta) (the truncation
// would cut the tip cap) or theta is outside (0, pi/2).
MeridianDomain build_domain(const Aperture& ap, double s_max);

}  // namespace conelayer
