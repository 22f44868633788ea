#pragma once

#include <vector>

namespace conelayer::oracles {

// Bessel functions of the first kind, evaluated from the integral
// representations J0(x) = (1/pi) Int_0^pi cos(x sin t) dt and
// J1(x) = (1/pi) Int_0^pi cos(t - x sin t) dt with a periodic trapezoid rule,
// which converges geometrically for these entire integrands.  Accurate to
// ~1e-14 for |x| <= 80, which covers the zero table below.
double bessel_j0(double x);
double bessel_j1(double x);

// k-th positive zero of J0 (k >= 1, k <= 20), located from the McMahon
// estimate and polished by Newton with J0' = -J1; |J0(zero)| <= 1e-13.
double bessel_j0_zero(int k);

// lambda0 = (j_{0,1} / pi)^2, the lowest Dirichlet eigenvalue of the unit
// scaled disk of radius pi; the spectral floor constant of the layer problem.
double lambda0();

// Dirichlet eigenvalues (j_{0,p}/R)^2 + (pi q / L)^2 of the axisymmetric
// (m = 0) cylinder of radius R and length L, ascending, first `count`.
std::vector<double> cylinder_spectrum(double R, double L, int count);

// Dirichlet rectangle eigenvalues pi^2 (p^2/a^2 + q^2/b^2), ascending.
std::vector<double> rectangle_spectrum(double a, double b, int count);

}  // namespace conelayer::oracles
