#include "conelayer/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "conelayer/oracles.hpp"
#include "conelayer/svg.hpp"
#include "json.hpp"

namespace conelayer {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << content;
}

Aperture RunConfig::aperture() const {
  int set = (theta_rad ? 1 : 0) + (theta_deg ? 1 : 0) + (beta_deg ? 1 : 0);
  if (set != 1)
    throw std::invalid_argument(
        "exactly one of --theta-rad, --theta-deg, --beta-deg is required");
  if (theta_rad) return Aperture::from_theta(*theta_rad);
  if (theta_deg) return Aperture::from_theta_deg(*theta_deg);
  return Aperture::from_beta_deg(*beta_deg);
}

std::vector<Aperture> RunConfig::sweep_apertures() const {
  std::vector<Aperture> out;
  for (double b : beta_list_deg) out.push_back(Aperture::from_beta_deg(b));
  for (double t : theta_list_deg) out.push_back(Aperture::from_theta_deg(t));
  if (out.empty())
    throw std::invalid_argument(
        "sweep needs --beta-list/--beta-range or --theta-list");
  std::sort(out.begin(), out.end(),
            [](const Aperture& a, const Aperture& b) {
              return a.theta() < b.theta();
            });
  return out;
}

MeshParams RunConfig::mesh_params() const {
  MeshParams mp;
  mp.h = mesh_h;
  mp.grading = grading;
  return mp;
}

EigenSolveParams RunConfig::solver_params() const {
  EigenSolveParams ep;
  ep.k = k;
  ep.tol = tol;
  ep.max_iter = max_iter;
  if (sigma >= 0) ep.sigma = sigma;
  return ep;
}

ConvergencePolicy RunConfig::policy() const {
  ConvergencePolicy pol;
  pol.do_refine = refine;
  if (smax != "auto") {
    size_t pos = 0;
    double v = std::stod(smax, &pos);
    if (pos != smax.size() || !(v > 0))
      throw std::invalid_argument("bad --smax value: " + smax);
    pol.fixed_smax = v;
  }
  return pol;
}

std::map<std::string, std::string> RunConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  if (theta_rad) kv["theta-rad"] = format_g17(*theta_rad);
  if (theta_deg) kv["theta-deg"] = format_g17(*theta_deg);
  if (beta_deg) kv["beta-deg"] = format_g17(*beta_deg);
  auto join = [](const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) s += ",";
      s += format_g17(v[i]);
    }
    return s;
  };
  if (!beta_list_deg.empty()) kv["beta-list"] = join(beta_list_deg);
  if (!theta_list_deg.empty()) kv["theta-list"] = join(theta_list_deg);
  kv["m"] = std::to_string(m);
  kv["k"] = std::to_string(k);
  kv["mesh-h"] = format_g17(mesh_h);
  kv["grading"] = format_g17(grading);
  kv["smax"] = smax;
  kv["tol"] = format_g17(tol);
  kv["max-iter"] = std::to_string(max_iter);
  kv["sigma"] = format_g17(sigma);
  kv["refine"] = refine ? "true" : "false";
  kv["threads"] = std::to_string(threads);
  kv["lambda-bar"] = format_g17(lambda_bar);
  if (!sweep_csv.empty()) kv["sweep-csv"] = sweep_csv;
  kv["vertical-scale"] = format_g17(vertical_scale);
  kv["contour-levels"] = std::to_string(contour_levels);
  return kv;
}

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg.to_kv()) j[k] = v;
  return j;
}

json mesh_stats_json(const Mesh& mesh) {
  return json{{"vertices", mesh.vertex_count()},
              {"nodes", mesh.node_count()},
              {"triangles", mesh.triangle_count()},
              {"boundary_edges", mesh.boundary.size()},
              {"min_angle_deg", mesh.min_angle_deg},
              {"min_angle_strip_deg", mesh.min_angle_strip_deg},
              {"max_aspect", mesh.max_aspect}};
}

void write_manifest(const std::string& dir, const RunConfig& cfg,
                    const json& extra,
                    const std::vector<std::string>& files,
                    const std::map<std::string, double>& timings_ms) {
  json man;
  man["version"] = kVersion;
  man["config"] = config_json(cfg);
  for (auto it = extra.begin(); it != extra.end(); ++it)
    man[it.key()] = it.value();
  json outs = json::array();
  for (const auto& f : files) {
    char hex[20];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a64(read_file(dir + "/" + f))));
    outs.push_back(json{{"file", f}, {"fnv1a64", hex}});
  }
  man["outputs"] = outs;
  json tj = json::object();
  for (const auto& [k, v] : timings_ms) tj[k] = v;
  man["timings_ms"] = tj;
  write_file(dir + "/manifest.json", man.dump(2) + "\n");
}

std::string spectrum_csv(const Aperture& ap, int m, const LayerResult& r) {
  std::string csv = "angle_theta_rad,m,j,lambda,residual,ndof,smax,converged\n";
  for (int j = 0; j < r.count(); ++j) {
    bool conv_s = j < static_cast<int>(r.smax_delta.size())
                      ? r.smax_delta[j] < 1e-6
                      : r.smax_converged;
    bool conv_r = !r.refine_checked ||
                  (j < static_cast<int>(r.refine_delta.size()) &&
                   r.refine_delta[j] < 1e-5);
    csv += format_g17(ap.theta()) + "," + std::to_string(m) + "," +
           std::to_string(j + 1) + "," + format_g17(r.lambda(j)) + "," +
           format_g17(r.spectrum.residuals[j]) + "," +
           std::to_string(r.system.n_free) + "," + format_g17(r.s_max) + "," +
           (conv_s && conv_r ? "1" : "0") + "\n";
  }
  return csv;
}

json spectrum_json(const RunConfig& cfg, const Aperture& ap,
                   const LayerResult& r) {
  json j;
  j["version"] = kVersion;
  j["theta_rad"] = ap.theta();
  j["theta_deg"] = ap.theta_deg();
  j["beta_deg"] = ap.beta_deg();
  j["m"] = cfg.m;
  j["smax"] = r.s_max;
  j["ndof"] = r.system.n_free;
  j["doublings"] = r.doublings;
  j["smax_converged"] = r.smax_converged;
  j["solver"] = {{"iterations", r.spectrum.iterations},
                 {"sigma_used", r.spectrum.sigma_used},
                 {"converged", r.spectrum.converged},
                 {"factorization_retries", r.spectrum.factorization_retries}};
  json evs = json::array();
  for (int i = 0; i < r.count(); ++i) {
    json e;
    e["j"] = i + 1;
    e["lambda"] = r.lambda(i);
    e["lambda_fine_mesh"] = r.spectrum.values[i];
    e["residual"] = r.spectrum.residuals[i];
    if (i < static_cast<int>(r.smax_delta.size()))
      e["smax_delta"] = r.smax_delta[i];
    if (i < static_cast<int>(r.refine_delta.size()))
      e["refine_delta"] = r.refine_delta[i];
    evs.push_back(e);
  }
  j["eigenvalues"] = evs;
  json above = json::array();
  for (double v : r.spectrum.above_threshold) above.push_back(v);
  j["above_threshold"] = above;
  return j;
}

LayerResult run_solve(const RunConfig& cfg, const Aperture& ap) {
  return solve_layer(ap, cfg.m, cfg.solver_params(), cfg.mesh_params(),
                     cfg.policy());
}

int guarded(const RunConfig& cfg, const std::function<void()>& body) {
  try {
    fs::create_directories(cfg.output_dir);
    body();
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      write_file(cfg.output_dir + "/error.json",
                 json{{"error", e.what()}}.dump(2) + "\n");
    } catch (...) {
    }
    return 1;
  }
}

}  // namespace

int cmd_solve(const RunConfig& cfg) {
  return guarded(cfg, [&] {
    double t0 = now_ms();
    Aperture ap = cfg.aperture();
    LayerResult r = run_solve(cfg, ap);
    double t1 = now_ms();
    write_file(cfg.output_dir + "/spectrum.csv", spectrum_csv(ap, cfg.m, r));
    write_file(cfg.output_dir + "/spectrum.json",
               spectrum_json(cfg, ap, r).dump(2) + "\n");
    json extra;
    extra["mesh"] = mesh_stats_json(r.mesh);
    write_manifest(cfg.output_dir, cfg, extra, {"spectrum.csv", "spectrum.json"},
                   {{"solve", t1 - t0}});
  });
}

int cmd_sweep(const RunConfig& cfg) {
  return guarded(cfg, [&] {
    double t0 = now_ms();
    std::vector<Aperture> angles = cfg.sweep_apertures();
    SweepResult sw = sweep(angles, cfg.k, cfg.solver_params(),
                           cfg.mesh_params(), cfg.policy(), cfg.threads);
    double t1 = now_ms();

    std::string csv = "theta_rad,beta_deg,j,lambda,ok\n";
    int n_ok = 0;
    for (const auto& e : sw.entries) {
      if (!e.ok) {
        csv += format_g17(e.theta_rad) + "," + format_g17(e.beta_deg) +
               ",0,nan,0\n";
        continue;
      }
      ++n_ok;
      for (size_t j = 0; j < e.lambdas.size(); ++j) {
        csv += format_g17(e.theta_rad) + "," + format_g17(e.beta_deg) + "," +
               std::to_string(j + 1) + "," + format_g17(e.lambdas[j]) + ",1\n";
      }
    }
    write_file(cfg.output_dir + "/sweep.csv", csv);
    write_sweep_svg(cfg.output_dir + "/sweep.svg", sw);

    json extra;
    json entries = json::array();
    for (const auto& e : sw.entries) {
      json je;
      je["theta_rad"] = e.theta_rad;
      je["beta_deg"] = e.beta_deg;
      je["ok"] = e.ok;
      if (!e.ok) je["error"] = e.error;
      je["smax"] = e.s_max;
      je["smax_converged"] = e.smax_converged;
      je["ndof"] = e.n_free;
      entries.push_back(je);
    }
    extra["entries"] = entries;
    extra["branch_count"] = sw.branch_count;
    write_manifest(cfg.output_dir, cfg, extra, {"sweep.csv", "sweep.svg"},
                   {{"sweep", t1 - t0}});
    if (n_ok == 0) throw std::runtime_error("sweep: every angle failed");
  });
}

int cmd_plot_modes(const RunConfig& cfg) {
  return guarded(cfg, [&] {
    double t0 = now_ms();
    Aperture ap = cfg.aperture();
    LayerResult r = run_solve(cfg, ap);
    std::vector<std::string> files;
    std::vector<Profile> profiles;
    for (int j = 1; j <= r.count(); ++j) {
      Eigen::VectorXd field = r.system.expand(r.spectrum.vectors.col(j - 1));
      std::string name = "mode_" + std::to_string(j) + ".svg";
      write_mode_svg(cfg.output_dir + "/" + name, r.mesh, ap, field,
                     cfg.contour_levels, cfg.vertical_scale);
      files.push_back(name);
      profiles.push_back(profile_report(r.mesh, field, ap));
    }
    write_profiles_svg(cfg.output_dir + "/profiles.svg", profiles);
    files.push_back("profiles.svg");
    double t1 = now_ms();
    json extra;
    extra["mesh"] = mesh_stats_json(r.mesh);
    extra["modes"] = r.count();
    write_manifest(cfg.output_dir, cfg, extra, files, {{"plot", t1 - t0}});
  });
}

int cmd_bound(const RunConfig& cfg) {
  return guarded(cfg, [&] {
    Aperture ap = cfg.aperture();
    CylinderBound cb = cylinder_count_bound(ap, cfg.lambda_bar);
    json j;
    j["version"] = kVersion;
    j["theta_rad"] = cb.theta;
    j["theta_deg"] = ap.theta_deg();
    j["beta_deg"] = ap.beta_deg();
    j["lambda_bar"] = cb.lambda_bar;
    j["R"] = cb.R;
    j["L"] = cb.L;
    j["N"] = cb.N;
    if (!cfg.sweep_csv.empty()) {
      // Count FEM eigenvalues below lambda_bar at the nearest swept angle.
      std::istringstream is(read_file(cfg.sweep_csv));
      std::string line;
      std::getline(is, line);  // header
      double best_dt = 1e300, best_theta = 0;
      std::vector<std::pair<double, double>> rows;  // theta, lambda
      while (std::getline(is, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double th, beta, lam;
        int jj, ok;
        if (!(ls >> th >> beta >> jj >> lam >> ok)) continue;
        if (!ok) continue;
        rows.emplace_back(th, lam);
        if (std::abs(th - ap.theta()) < best_dt) {
          best_dt = std::abs(th - ap.theta());
          best_theta = th;
        }
      }
      int fem_count = 0;
      for (const auto& [th, lam] : rows)
        if (th == best_theta && lam < cfg.lambda_bar) ++fem_count;
      j["fem_theta_rad"] = best_theta;
      j["fem_count"] = fem_count;
      j["fem_count_ge_N"] = fem_count >= cb.N;
    }
    write_file(cfg.output_dir + "/bound.json", j.dump(2) + "\n");
    write_manifest(cfg.output_dir, cfg, json::object(), {"bound.json"}, {});
  });
}

int cmd_mesh_export(const RunConfig& cfg) {
  return guarded(cfg, [&] {
    Aperture ap = cfg.aperture();
    ConvergencePolicy pol = cfg.policy();
    double s_req;
    if (pol.fixed_smax) {
      s_req = *pol.fixed_smax;
    } else {
      double kappa = std::sqrt(1.0 - pol.span_lambda);
      s_req = pol.span_factor * (ap.tip_s() + pol.tail_safety / kappa);
    }
    MeshParams mp = cfg.mesh_params();
    double s_max = planned_truncation(ap, mp, s_req);
    Mesh mesh = generate_mesh(build_domain(ap, s_max), mp);
    std::ostringstream os;
    write_mesh(os, mesh);
    write_file(cfg.output_dir + "/mesh.txt", os.str());
    json extra;
    extra["mesh"] = mesh_stats_json(mesh);
    extra["smax"] = s_max;
    write_manifest(cfg.output_dir, cfg, extra, {"mesh.txt"}, {});
  });
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Discrete spectrum of the Dirichlet Laplacian on a conical "
               "layer of width pi"};
  app.fallthrough();
  RunConfig cfg;

  app.set_config("--config", "", "key = value configuration file");
  auto* o_tr = app.add_option("--theta-rad", "wall tilt angle in radians");
  auto* o_td = app.add_option("--theta-deg", "wall tilt angle in degrees");
  auto* o_bd = app.add_option("--beta-deg",
                              "cone half-aperture from the axis, degrees");
  app.add_option("--beta-list", cfg.beta_list_deg,
                 "sweep grid of beta values, degrees")
      ->delimiter(',');
  std::string beta_range;
  app.add_option("--beta-range", beta_range,
                 "sweep grid start:stop:step in degrees");
  app.add_option("--theta-list", cfg.theta_list_deg,
                 "sweep grid of theta values, degrees")
      ->delimiter(',');
  app.add_option("--m", cfg.m, "angular wavenumber");
  app.add_option("--k", cfg.k, "requested eigenvalue count");
  app.add_option("--mesh-h", cfg.mesh_h, "target edge length");
  app.add_option("--grading", cfg.grading, "tip refinement factor");
  app.add_option("--smax", cfg.smax, "truncation: auto or a length");
  app.add_option("--tol", cfg.tol, "residual tolerance");
  app.add_option("--max-iter", cfg.max_iter, "solver iteration budget");
  app.add_option("--sigma", cfg.sigma, "spectral shift (negative = default)");
  app.add_flag("--refine,!--no-refine", cfg.refine,
               "nested refinement + Richardson step");
  app.add_option("--threads", cfg.threads, "sweep worker cap");
  app.add_option("--lambda-bar", cfg.lambda_bar, "counting level in (l0,1)");
  app.add_option("--sweep-csv", cfg.sweep_csv, "sweep.csv for comparison");
  app.add_option("--vertical-scale", cfg.vertical_scale,
                 "transverse axis stretch in mode plots");
  app.add_option("--contour-levels", cfg.contour_levels,
                 "contour levels per sign");
  app.add_option("--output-dir", cfg.output_dir, "output directory");

  auto* solve = app.add_subcommand("solve", "spectrum at one angle");
  auto* sweep_cmd = app.add_subcommand("sweep", "eigenvalue branches vs angle");
  auto* plot = app.add_subcommand("plot-modes", "eigenfunction figures");
  auto* bound = app.add_subcommand("bound", "inscribed-cylinder lower bound");
  auto* mexp = app.add_subcommand("mesh-export", "write the mesh as text");
  app.require_subcommand(0, 1);

  std::vector<std::string> rargs(args.rbegin(), args.rend());
  try {
    app.parse(rargs);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  if (o_tr->count()) cfg.theta_rad = o_tr->as<double>();
  if (o_td->count()) cfg.theta_deg = o_td->as<double>();
  if (o_bd->count()) cfg.beta_deg = o_bd->as<double>();
  if (!beta_range.empty()) {
    double lo, hi, step;
    if (std::sscanf(beta_range.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 ||
        !(step > 0)) {
      std::cerr << "usage error: bad --beta-range\n";
      return 2;
    }
    for (double b = lo; b <= hi + 1e-12; b += step)
      cfg.beta_list_deg.push_back(b);
  }

  if (solve->parsed()) return cmd_solve(cfg);
  if (sweep_cmd->parsed()) return cmd_sweep(cfg);
  if (plot->parsed()) return cmd_plot_modes(cfg);
  if (bound->parsed()) return cmd_bound(cfg);
  if (mexp->parsed()) return cmd_mesh_export(cfg);
  std::cerr << app.help();
  return 2;
}

}  // namespace conelayer
