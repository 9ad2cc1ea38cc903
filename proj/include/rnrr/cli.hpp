#pragma once

// Command-line front end: run configuration, flag/config-file binding and
// the register / synth / ablate commands.

#include "rnrr/common.hpp"
#include "rnrr/eval.hpp"
#include "rnrr/geometry_io.hpp"
#include "rnrr/solver.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace rnrr {

struct RunConfig {
  std::string source;
  std::string target;
  std::string gt;
  std::string out = "out";
  SolverParams solver;
  std::uint64_t seed = 0;

  // synth
  double deform_angle = 10.0;        // degrees, per node
  double deform_translation = 0.0;   // x source l-bar
  double noise_fraction = 0.0;
  double noise_sigma = 1.0;          // x target l-bar
  double outlier_fraction = 0.0;
  double outlier_magnitude = 5.0;    // x target l-bar
  int remove_seed = -1;              // < 0 disables removal
  double remove_radius = 0.0;        // x target l-bar

  // ablate
  std::vector<double> radius_factors{5.0};
  std::vector<std::string> kernels{"welsch", "l2"};
  std::vector<std::string> nu_modes{"annealed", "fixed"};
};

inline const std::map<std::string, Kernel>& kernel_names() {
  static const std::map<std::string, Kernel> m{{"welsch", Kernel::welsch}, {"l2", Kernel::l2}};
  return m;
}

inline const std::map<std::string, Sampler>& sampler_names() {
  static const std::map<std::string, Sampler> m{{"pca", Sampler::pca}, {"farthest", Sampler::farthest}};
  return m;
}

inline std::string kernel_name(Kernel k) { return k == Kernel::welsch ? "welsch" : "l2"; }
inline std::string sampler_name(Sampler s) { return s == Sampler::pca ? "pca" : "farthest"; }

/// Binds every run option to `cfg`. Option names double as config-file keys.
inline void bind_options(CLI::App& app, RunConfig& cfg) {
  SolverParams& sp = cfg.solver;
  app.add_option("--source", cfg.source, "source surface (obj/ply)");
  app.add_option("--target", cfg.target, "target surface (obj/ply)");
  app.add_option("--gt", cfg.gt, "ground-truth positions (ply), index-aligned with the source");
  app.add_option("--out", cfg.out, "output directory");
  app.add_option("--kernel", sp.kernel, "robust kernel")
      ->transform(CLI::CheckedTransformer(kernel_names(), CLI::ignore_case));
  app.add_option("--sampler", sp.sampler, "graph node sampler")
      ->transform(CLI::CheckedTransformer(sampler_names(), CLI::ignore_case));
  app.add_option("--radius-factor", sp.radius_factor, "R in units of mean edge length");
  app.add_option("--edge-radius-factor", sp.edge_radius_factor, "node edges below this multiple of R");
  app.add_option("--k-alpha", sp.k_alpha);
  app.add_option("--k-beta", sp.k_beta);
  app.add_option("--nu-a-max-factor", sp.nu_a_max_factor);
  app.add_option("--nu-a-min-factor", sp.nu_a_min_factor);
  app.add_option("--nu-r-max-factor", sp.nu_r_max_factor);
  app.add_flag("--fixed-nu", sp.fixed_nu, "skip annealing");
  app.add_option("--eps-d", sp.icp.max_distance, "rigid ICP distance rejection");
  app.add_option("--theta", sp.icp.max_angle_deg, "rigid ICP normal-angle rejection, degrees");
  app.add_option("--icp-iterations", sp.icp.iterations);
  app.add_option("--rigid-init", sp.rigid_init);
  app.add_option("--seed", cfg.seed);
  app.add_option("--m", sp.history, "L-BFGS history");
  app.add_option("--gamma", sp.gamma);
  app.add_option("--eps1", sp.eps1);
  app.add_option("--eps2", sp.eps2);
  app.add_option("--imax", sp.max_outer);
  app.add_option("--max-inner", sp.max_inner);
  app.add_option("--timing", sp.record_timing, "record wall time in traces (false writes zeros)");

  app.add_option("--deform-angle", cfg.deform_angle);
  app.add_option("--deform-translation", cfg.deform_translation);
  app.add_option("--noise-fraction", cfg.noise_fraction);
  app.add_option("--noise-sigma", cfg.noise_sigma);
  app.add_option("--outlier-fraction", cfg.outlier_fraction);
  app.add_option("--outlier-magnitude", cfg.outlier_magnitude);
  app.add_option("--remove-seed", cfg.remove_seed);
  app.add_option("--remove-radius", cfg.remove_radius);

  app.add_option("--radius-factors", cfg.radius_factors)->delimiter(',');
  app.add_option("--kernels", cfg.kernels)->delimiter(',')->check(CLI::IsMember({"welsch", "l2"}));
  app.add_option("--nu-modes", cfg.nu_modes)->delimiter(',')->check(CLI::IsMember({"annealed", "fixed"}));
}

namespace detail {

inline std::string quote(const std::string& s) { return "\"" + s + "\""; }

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>)
      out += format_double(v[i]);
    else
      out += v[i];
  }
  return out;
}

}  // namespace detail

/// Flat key = value text covering every option, readable back through
/// the --config flag. Doubles are written in shortest round-trip form.
inline std::string config_text(const RunConfig& c) {
  const SolverParams& sp = c.solver;
  using detail::format_double;
  std::ostringstream o;
  auto kv = [&](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  if (!c.source.empty()) kv("source", detail::quote(c.source));
  if (!c.target.empty()) kv("target", detail::quote(c.target));
  if (!c.gt.empty()) kv("gt", detail::quote(c.gt));
  kv("out", detail::quote(c.out));
  kv("kernel", kernel_name(sp.kernel));
  kv("sampler", sampler_name(sp.sampler));
  kv("radius-factor", format_double(sp.radius_factor));
  kv("edge-radius-factor", format_double(sp.edge_radius_factor));
  kv("k-alpha", format_double(sp.k_alpha));
  kv("k-beta", format_double(sp.k_beta));
  kv("nu-a-max-factor", format_double(sp.nu_a_max_factor));
  kv("nu-a-min-factor", format_double(sp.nu_a_min_factor));
  kv("nu-r-max-factor", format_double(sp.nu_r_max_factor));
  kv("fixed-nu", b(sp.fixed_nu));
  kv("eps-d", format_double(sp.icp.max_distance));
  kv("theta", format_double(sp.icp.max_angle_deg));
  kv("icp-iterations", std::to_string(sp.icp.iterations));
  kv("rigid-init", b(sp.rigid_init));
  kv("seed", std::to_string(c.seed));
  kv("m", std::to_string(sp.history));
  kv("gamma", format_double(sp.gamma));
  kv("eps1", format_double(sp.eps1));
  kv("eps2", format_double(sp.eps2));
  kv("imax", std::to_string(sp.max_outer));
  kv("max-inner", std::to_string(sp.max_inner));
  kv("timing", b(sp.record_timing));
  kv("deform-angle", format_double(c.deform_angle));
  kv("deform-translation", format_double(c.deform_translation));
  kv("noise-fraction", format_double(c.noise_fraction));
  kv("noise-sigma", format_double(c.noise_sigma));
  kv("outlier-fraction", format_double(c.outlier_fraction));
  kv("outlier-magnitude", format_double(c.outlier_magnitude));
  kv("remove-seed", std::to_string(c.remove_seed));
  kv("remove-radius", format_double(c.remove_radius));
  kv("radius-factors", detail::quote(detail::join(c.radius_factors)));
  kv("kernels", detail::quote(detail::join(c.kernels)));
  kv("nu-modes", detail::quote(detail::join(c.nu_modes)));
  return o.str();
}

inline void save_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << config_text(c);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

/// Reads a config file written by save_config (or by hand).
inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path.string());
  RunConfig cfg;
  CLI::App app;
  bind_options(app, cfg);
  app.set_config("--config", path.string(), "", true);
  try {
    app.parse(std::vector<std::string>{});
  } catch (const CLI::ParseError& e) {
    throw InvalidParameter(std::string("bad config '") + path.string() + "': " + e.what());
  }
  return cfg;
}

/// Thrown for invalid command lines and missing inputs; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing --") + what);
  if (!std::filesystem::is_regular_file(path)) throw UsageError(std::string("input file not found: ") + path);
}

/// Remembers written files and deletes them unless committed.
class OutputGuard {
 public:
  explicit OutputGuard(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    if (!std::filesystem::exists(dir_)) {
      std::filesystem::create_directories(dir_, ec);
      if (ec) throw IoError("cannot create output directory '" + dir_.string() + "'");
      created_dir_ = true;
    }
  }
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) std::filesystem::remove(f, ec);
    if (created_dir_) std::filesystem::remove(dir_, ec);  // only if empty
  }
  std::filesystem::path file(const std::string& name) {
    files_.push_back(dir_ / name);
    return files_.back();
  }
  void commit() { committed_ = true; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

inline Surface with_normals(Surface s) {
  if (!s.has_normals()) s = compute_normals(s);
  return s;
}

struct RegisterRun {
  RegistrationResult result;
  NormalizationRecord record;
  Points deformed;       // original target units
  double rmse = -1.0;    // original units, < 0 without ground truth
  double rmse_normalized = -1.0;
  double seconds = 0.0;
};

inline RegisterRun run_registration(const Surface& source, const Surface& target, const GroundTruth* gt,
                                    const SolverParams& params) {
  if (gt && gt->gt_positions.size() != source.size())
    throw InvalidInput("ground truth has " + std::to_string(gt->gt_positions.size()) + " points, source has " +
                       std::to_string(source.size()));
  RegisterRun run;
  const auto t0 = std::chrono::steady_clock::now();
  const NormalizedPair np = normalize_pair(with_normals(source), with_normals(target));
  run.record = np.record;
  run.result = register_surfaces(np.source, np.target, params);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const Vec3& p : run.result.transformed_source) run.deformed.push_back(np.record.denormalize_target(p));
  if (gt) {
    run.rmse = rmse(run.deformed, *gt);
    Points gtn;
    for (const Vec3& p : gt->gt_positions) gtn.push_back(np.record.normalize_target(p));
    run.rmse_normalized = rmse(run.result.transformed_source, gtn);
  }
  return run;
}

}  // namespace detail

/// register: writes deformed.ply, trace.csv, config.txt and, with ground
/// truth, errors.ply; prints the RMSE.
inline int cmd_register(const RunConfig& cfg, std::ostream& out = std::cout) {
  detail::require_file(cfg.source, "source");
  detail::require_file(cfg.target, "target");
  if (!cfg.gt.empty()) detail::require_file(cfg.gt, "gt");
  cfg.solver.validate();
  const Surface source = load_surface(cfg.source);
  const Surface target = load_surface(cfg.target);
  std::optional<GroundTruth> gt;
  if (!cfg.gt.empty()) gt = read_ground_truth(cfg.gt);

  detail::OutputGuard guard(cfg.out);
  const detail::RegisterRun run = detail::run_registration(source, target, gt ? &*gt : nullptr, cfg.solver);
  Surface deformed = source;
  deformed.vertices = run.deformed;
  deformed.normals.clear();
  if (deformed.has_faces()) deformed = compute_normals(deformed);
  write_ply(deformed, guard.file("deformed.ply"));
  write_trace_csv(run.result.trace, guard.file("trace.csv"));
  save_config(cfg, guard.file("config.txt"));
  if (gt) {
    write_error_mesh(deformed, pointwise_errors(run.deformed, gt->gt_positions), guard.file("errors.ply"));
    out << "rmse " << detail::format_double(run.rmse) << '\n';
    out << "rmse_normalized " << detail::format_double(run.rmse_normalized) << '\n';
  }
  out << "nodes " << run.result.graph.node_count() << '\n';
  guard.commit();
  return 0;
}

/// synth: deforms the source through its own deformation graph, then
/// optionally adds noise, outliers and a removed region. Writes target.ply,
/// gt.ply and config.txt.
inline int cmd_synth(const RunConfig& cfg, std::ostream& out = std::cout) {
  detail::require_file(cfg.source, "source");
  cfg.solver.validate();
  const Surface source = detail::with_normals(load_surface(cfg.source));
  const double lbar = mean_edge_length(source);
  const DeformationGraph g =
      build_graph(source, cfg.solver.radius_factor * lbar, cfg.solver.sampler, cfg.solver.edge_radius_factor);

  // One master generator hands out the seeds of every random step.
  std::mt19937_64 master(cfg.seed);
  const std::uint64_t deform_seed = master(), noise_seed = master(), outlier_seed = master();

  const TransformState st =
      random_node_transforms(g.node_count(), cfg.deform_angle, cfg.deform_translation * lbar, deform_seed);
  SyntheticPair pair = synthesize_deformation(source, g, st);
  Surface target = pair.target;
  const double tlbar = mean_edge_length(target);
  if (cfg.noise_fraction > 0.0)
    target = add_gaussian_normal_noise(target, cfg.noise_fraction, cfg.noise_sigma * tlbar, noise_seed);
  if (cfg.outlier_fraction > 0.0)
    target = add_normal_outliers(target, cfg.outlier_fraction, cfg.outlier_magnitude * tlbar, outlier_seed);
  int removed = 0;
  if (cfg.remove_seed >= 0) {
    if (cfg.remove_seed >= static_cast<int>(target.size()))
      throw InvalidParameter("remove-seed " + std::to_string(cfg.remove_seed) + " is out of range");
    const PartialSurface part = remove_region(target, cfg.remove_seed, cfg.remove_radius * tlbar);
    removed = static_cast<int>(target.size() - part.kept.size());
    target = part.surface;
  }

  detail::OutputGuard guard(cfg.out);
  write_ply(target, guard.file("target.ply"));
  write_ground_truth(pair.truth, guard.file("gt.ply"));
  save_config(cfg, guard.file("config.txt"));
  out << "nodes " << g.node_count() << '\n' << "removed " << removed << '\n';
  guard.commit();
  return 0;
}

/// ablate: kernel x radius factor x nu mode matrix. Each cell is independent;
/// a failing cell is recorded in the CSV and the sweep goes on.
inline int cmd_ablate(const RunConfig& cfg, std::ostream& out = std::cout) {
  detail::require_file(cfg.source, "source");
  detail::require_file(cfg.target, "target");
  if (!cfg.gt.empty()) detail::require_file(cfg.gt, "gt");
  if (cfg.radius_factors.empty() || cfg.kernels.empty() || cfg.nu_modes.empty())
    throw InvalidParameter("ablate: empty sweep");
  const Surface source = load_surface(cfg.source);
  const Surface target = load_surface(cfg.target);
  std::optional<GroundTruth> gt;
  if (!cfg.gt.empty()) gt = read_ground_truth(cfg.gt);

  detail::OutputGuard guard(cfg.out);
  std::ostringstream csv;
  csv << "kernel,radius_factor,nu_mode,nodes,rmse,rmse_normalized,seconds,status,message\n";
  int failures = 0;
  for (const std::string& kname : cfg.kernels)
    for (double rf : cfg.radius_factors)
      for (const std::string& mode : cfg.nu_modes) {
        SolverParams sp = cfg.solver;
        sp.kernel = kernel_names().at(kname);
        sp.radius_factor = rf;
        sp.fixed_nu = mode == "fixed";
        csv << kname << ',' << detail::format_double(rf) << ',' << mode << ',';
        try {
          const detail::RegisterRun run = detail::run_registration(source, target, gt ? &*gt : nullptr, sp);
          csv << run.result.graph.node_count() << ',';
          if (gt)
            csv << detail::format_double(run.rmse) << ',' << detail::format_double(run.rmse_normalized);
          else
            csv << ',';
          csv << ',' << detail::format_double(sp.record_timing ? run.seconds : 0.0) << ",ok,\n";
        } catch (const std::exception& e) {
          ++failures;
          std::string msg = e.what();
          std::replace(msg.begin(), msg.end(), ',', ';');
          std::replace(msg.begin(), msg.end(), '\n', ' ');
          csv << ",,,,failed," << msg << '\n';
        }
      }
  {
    const auto path = guard.file("ablation.csv");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << csv.str();
    if (!f) throw IoError("failed writing '" + path.string() + "'");
  }
  save_config(cfg, guard.file("config.txt"));
  out << "cells " << cfg.kernels.size() * cfg.radius_factors.size() * cfg.nu_modes.size() << " failed " << failures
      << '\n';
  guard.commit();
  return 0;
}

/// Full command-line entry point. Exit codes: 0 success, 1 runtime failure,
/// 2 usage error or missing input.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig cfg;
  CLI::App app("Robust non-rigid registration of surfaces", "rnrr");
  app.set_config("--config", "", "flat key = value file; command-line flags take precedence");
  bind_options(app, cfg);
  app.require_subcommand(1, 1);
  CLI::App* reg = app.add_subcommand("register", "register source to target");
  CLI::App* syn = app.add_subcommand("synth", "make a synthetic target with ground truth");
  CLI::App* abl = app.add_subcommand("ablate", "sweep kernel, radius and nu schedule");
  for (CLI::App* sub : {reg, syn, abl}) sub->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    // A --config path that does not exist surfaces here as well.
    err << "error: " << e.what() << '\n';
    return 2;
  }
  try {
    if (reg->parsed()) return cmd_register(cfg, out);
    if (syn->parsed()) return cmd_synth(cfg, out);
    return cmd_ablate(cfg, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace rnrr
