#pragma once

#include <string>
#include <vector>

#include "conelayer/analysis.hpp"

namespace conelayer {

// Minimal self-contained SVG figures (paths and text only, no external
// resources).

// Eigenvalue branches against the opening angle in degrees, with the
// continuum threshold drawn at lambda = 1 and a filled dot marking lambda0
// on the value axis.
void write_sweep_svg(const std::string& path, const SweepResult& sweep);

// Contour plot of a P2 field over the meridian half-plane (r horizontal,
// z vertical... plotted as z along the long axis).  Contours are stroked in
// a signed palette; the zero level set is stroked black.  vertical_scale
// stretches the transverse axis for very elongated domains.
void write_mode_svg(const std::string& path, const Mesh& mesh,
                    const Aperture& ap, const Eigen::VectorXd& node_values,
                    int contour_levels, double vertical_scale);

// Overlaid |psi|^2 envelopes against z, one polyline per mode, sharing one
// normalization.
void write_profiles_svg(const std::string& path,
                        const std::vector<Profile>& profiles);

}  // namespace conelayer
