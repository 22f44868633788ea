#include "conelayer/geometry.hpp"

#include <stdexcept>

namespace conelayer {

Aperture::Aperture(double theta_rad) : theta_(theta_rad) {
  if (!(theta_rad > 0.0) || !(theta_rad < kPi / 2)) {
    throw std::invalid_argument("aperture: theta must lie in (0, pi/2), got " +
                                std::to_string(theta_rad));
  }
  cos_ = std::cos(theta_rad);
  sin_ = std::sin(theta_rad);
}

Aperture Aperture::from_theta(double theta_rad) { return Aperture(theta_rad); }

Aperture Aperture::from_beta(double beta_rad) {
  return Aperture(kPi / 2 - beta_rad);
}

Aperture Aperture::from_theta_deg(double theta_deg) {
  return Aperture(theta_deg * kPi / 180.0);
}

Aperture Aperture::from_beta_deg(double beta_deg) {
  return Aperture(kPi / 2 - beta_deg * kPi / 180.0);
}

namespace {

Point2 su_from_rz(const Point2& p, const Aperture& ap) {
  return {p.a * ap.cos_theta() + p.b * ap.sin_theta(),
          -p.a * ap.sin_theta() + p.b * ap.cos_theta()};
}

Point2 rz_from_su(const Point2& p, const Aperture& ap) {
  return {p.a * ap.cos_theta() - p.b * ap.sin_theta(),
          p.a * ap.sin_theta() + p.b * ap.cos_theta()};
}

Point2 yv_from_su(const Point2& p, const Aperture& ap) {
  return {p.a - p.b * ap.tan_theta(), p.b};
}

Point2 su_from_yv(const Point2& p, const Aperture& ap) {
  return {p.a + p.b * ap.tan_theta(), p.b};
}

}  // namespace

Point2 map_point(const Point2& p, Chart from, Chart to, const Aperture& ap) {
  if (from == to) return p;
  // Route everything through SU; each leg is an exact affine map.
  Point2 su = p;
  if (from == Chart::RZ) su = su_from_rz(p, ap);
  if (from == Chart::YV) su = su_from_yv(p, ap);
  switch (to) {
    case Chart::SU:
      return su;
    case Chart::RZ:
      return rz_from_su(su, ap);
    case Chart::YV:
      return yv_from_su(su, ap);
  }
  return su;
}

double weight_r(const Point2& su, const Aperture& ap) {
  return su.a * ap.cos_theta() - su.b * ap.sin_theta();
}

const char* to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::WallOuter:
      return "WALL_OUTER";
    case BoundaryTag::WallInner:
      return "WALL_INNER";
    case BoundaryTag::Axis:
      return "AXIS";
    case BoundaryTag::Truncation:
      return "TRUNCATION";
  }
  return "?";
}

BoundaryTag boundary_tag_from_string(const std::string& s) {
  if (s == "WALL_OUTER") return BoundaryTag::WallOuter;
  if (s == "WALL_INNER") return BoundaryTag::WallInner;
  if (s == "AXIS") return BoundaryTag::Axis;
  if (s == "TRUNCATION") return BoundaryTag::Truncation;
  throw std::invalid_argument("unknown boundary tag: " + s);
}

bool MeridianDomain::contains(const Point2& su, double tol) const {
  if (su.a < -tol || su.a > s_max + tol) return false;
  if (su.b < -tol || su.b > u_top(su.a) + tol) return false;
  return true;
}

MeridianDomain build_domain(const Aperture& ap, double s_max) {
  if (!(s_max > ap.tip_s())) {
    throw std::invalid_argument(
        "build_domain: s_max = " + std::to_string(s_max) +
        " must exceed the tip abscissa pi*tan(theta) = " +
        std::to_string(ap.tip_s()));
  }
  return MeridianDomain{ap, s_max};
}

}  // namespace conelayer
