#include "conelayer/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "conelayer/geometry.hpp"

namespace conelayer::oracles {

namespace {

// Midpoint rule over one period of a smooth periodic integrand; the error
// decays geometrically in the point count.
template <typename F>
double periodic_mean(F f, double period, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += f(period * (i + 0.5) / n);
  return acc / n;
}

int point_count(double x) {
  return 64 + 4 * static_cast<int>(std::ceil(std::abs(x)));
}

}  // namespace

double bessel_j0(double x) {
  return periodic_mean(
      [x](double t) { return std::cos(x * std::sin(t)); }, kPi,
      point_count(x));
}

double bessel_j1(double x) {
  // cos(t - x sin t) is 2pi-periodic; its mean over a period equals J1(x)/1
  // restricted to [0, pi] by symmetry.
  return periodic_mean(
      [x](double t) { return std::cos(t - x * std::sin(t)); }, 2 * kPi,
      2 * point_count(x));
}

double bessel_j0_zero(int k) {
  if (k < 1 || k > 20)
    throw std::invalid_argument("bessel_j0_zero: k must lie in [1, 20]");
  // McMahon expansion as the starting guess.
  double b = (k - 0.25) * kPi;
  double x = b + 1.0 / (8 * b) - 31.0 / (384 * b * b * b);
  for (int it = 0; it < 60; ++it) {
    double f = bessel_j0(x);
    double fp = -bessel_j1(x);
    double dx = f / fp;
    x -= dx;
    if (std::abs(dx) < 1e-15 * x) break;
  }
  return x;
}

double lambda0() {
  static const double value = [] {
    double j01 = bessel_j0_zero(1);
    return j01 * j01 / (kPi * kPi);
  }();
  return value;
}

std::vector<double> cylinder_spectrum(double R, double L, int count) {
  if (!(R > 0) || !(L > 0))
    throw std::invalid_argument("cylinder_spectrum: R, L must be positive");
  if (count < 1) return {};
  std::vector<double> vals;
  // The radial factor is bounded below by (j01/R)^2, so q is bounded once a
  // provisional count-th value is known; enumerate generously and sort.
  for (int p = 1; p <= 20; ++p) {
    double radial = bessel_j0_zero(p) / R;
    double radial2 = radial * radial;
    int qmax = std::max(
        count, static_cast<int>(std::ceil(L / kPi * std::sqrt(radial2 * 20))));
    qmax = std::min(qmax + 2, 100000);
    for (int q = 1; q <= qmax; ++q) {
      double axial = kPi * q / L;
      vals.push_back(radial2 + axial * axial);
    }
  }
  std::sort(vals.begin(), vals.end());
  if (static_cast<int>(vals.size()) > count) vals.resize(count);
  return vals;
}

std::vector<double> rectangle_spectrum(double a, double b, int count) {
  if (!(a > 0) || !(b > 0))
    throw std::invalid_argument("rectangle_spectrum: sides must be positive");
  if (count < 1) return {};
  std::vector<double> vals;
  int pmax = count + 1 + static_cast<int>(std::ceil(a / b)) * count;
  int qmax = count + 1 + static_cast<int>(std::ceil(b / a)) * count;
  pmax = std::min(pmax, 4000);
  qmax = std::min(qmax, 4000);
  for (int p = 1; p <= pmax; ++p)
    for (int q = 1; q <= qmax; ++q)
      vals.push_back(kPi * kPi * (p * p / (a * a) + q * q / (b * b)));
  std::sort(vals.begin(), vals.end());
  if (static_cast<int>(vals.size()) > count) vals.resize(count);
  return vals;
}

}  // namespace conelayer::oracles
