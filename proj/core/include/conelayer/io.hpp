#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "conelayer/analysis.hpp"

namespace conelayer {

inline constexpr const char* kVersion = "conelayer 0.1.0";

// Resolved configuration of one CLI invocation.  Angles are accepted in both
// conventions; exactly one of the three angle keys must be set and both
// parameterizations are echoed in every output.
struct RunConfig {
  std::optional<double> theta_rad;
  std::optional<double> theta_deg;
  std::optional<double> beta_deg;
  std::vector<double> beta_list_deg;  // sweep grid
  std::vector<double> theta_list_deg;

  int m = 0;
  int k = 7;
  double mesh_h = 0.25;
  double grading = 4.0;
  std::string smax = "auto";  // "auto" or a number
  double tol = 1e-9;
  int max_iter = 600;
  double sigma = -1.0;  // < 0 means the solver default 0.5*lambda0
  bool refine = true;
  int threads = 0;

  double lambda_bar = 0.9;
  std::string sweep_csv;  // optional FEM comparison input for `bound`

  double vertical_scale = 1.0;
  int contour_levels = 8;

  std::string output_dir = ".";

  Aperture aperture() const;  // throws std::invalid_argument on bad angles
  std::vector<Aperture> sweep_apertures() const;
  MeshParams mesh_params() const;
  EigenSolveParams solver_params() const;
  ConvergencePolicy policy() const;
  std::map<std::string, std::string> to_kv() const;
};

std::string format_g17(double x);
uint64_t fnv1a64(const std::string& bytes);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Subcommand drivers; each writes its files under config.output_dir and
// returns a process exit code (0 ok, 1 runtime failure, 2 usage).
int cmd_solve(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
int cmd_plot_modes(const RunConfig& cfg);
int cmd_bound(const RunConfig& cfg);
int cmd_mesh_export(const RunConfig& cfg);

// Full command line: parse (with optional `key = value` config file via
// --config) and dispatch.  Exit codes: 0 success, 1 runtime failure, 2 usage.
int run_cli(const std::vector<std::string>& args);

}  // namespace conelayer
