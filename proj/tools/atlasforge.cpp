// Command line front end: synthesize benchmark surfaces, fit an atlas to a
// point cloud, extract clouds and meshes from a fitted atlas, and score a
// fitted atlas against a target.
//
// Exit codes: 0 success, 1 usage or I/O failure, 2 numerical failure,
// 3 empty or degenerate surface.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "atlasforge/atlas.hpp"
#include "atlasforge/geom.hpp"
#include "atlasforge/infer.hpp"
#include "atlasforge/io.hpp"
#include "atlasforge/log.hpp"
#include "atlasforge/metrics.hpp"
#include "atlasforge/parallel.hpp"
#include "atlasforge/train.hpp"
#include "atlasforge/types.hpp"

namespace af = atlasforge;

namespace {

// Sub-seeds keep the training, calibration, and extraction streams
// independent of each other while staying reproducible from one --seed.
constexpr unsigned long long kCalibrationSeedOffset = 1;
constexpr unsigned long long kExtractSeedOffset = 2;

struct FitOptions {
  std::string target_path;
  std::string out_dir;
  std::string config_path;
  int charts = 3;
  int hidden_width = 128;
  int uv_samples = 5000;
  int iterations = 2000;
  double lr = 1e-3;
  double lambda_rec = 1.0;
  double lambda_occ = 1.0;
  double lambda_dist = 1e-5;
  double tau = 0.5;
  double metric_eps = 1e-4;
  unsigned long long seed = 0;
  int probe_samples = 5000;
  double eta = 0.4;
  int checkpoint_every = 0;
};

// Flat JSON config for fit; a command line flag beats a file value beats the
// built-in default. Unknown keys are rejected so typos cannot silently fall
// back to defaults.
void apply_fit_config(const CLI::App& cmd, const std::string& path, FitOptions& opt) {
  std::ifstream in(path);
  af::require(static_cast<bool>(in), af::ErrorKind::Io, "cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    af::fail(af::ErrorKind::Io, "bad config JSON: " + std::string(e.what()));
  }
  af::require(j.is_object(), af::ErrorKind::Io, "config must be a JSON object");

  const auto set_int = [&](const char* key, const char* flag, int& slot) {
    if (j.contains(key) && cmd.count(flag) == 0) slot = j.at(key).get<int>();
  };
  const auto set_double = [&](const char* key, const char* flag, double& slot) {
    if (j.contains(key) && cmd.count(flag) == 0) slot = j.at(key).get<double>();
  };

  static const std::vector<std::string> known = {
      "charts",     "hidden_width", "uv_samples", "iterations",       "lr",
      "lambda_rec", "lambda_occ",   "lambda_dist", "tau",             "metric_eps",
      "seed",       "probe_samples", "eta",        "checkpoint_every"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const std::string& k : known) ok = ok || k == item.key();
    af::require(ok, af::ErrorKind::Io, "unknown config key: " + item.key());
  }

  set_int("charts", "--charts", opt.charts);
  set_int("hidden_width", "--hidden-width", opt.hidden_width);
  set_int("uv_samples", "--uv-samples", opt.uv_samples);
  set_int("iterations", "--iterations", opt.iterations);
  set_double("lr", "--lr", opt.lr);
  set_double("lambda_rec", "--lambda-rec", opt.lambda_rec);
  set_double("lambda_occ", "--lambda-occ", opt.lambda_occ);
  set_double("lambda_dist", "--lambda-dist", opt.lambda_dist);
  set_double("tau", "--tau", opt.tau);
  set_double("metric_eps", "--metric-eps", opt.metric_eps);
  if (j.contains("seed") && cmd.count("--seed") == 0)
    opt.seed = j.at("seed").get<unsigned long long>();
  set_int("probe_samples", "--probe-samples", opt.probe_samples);
  set_double("eta", "--eta", opt.eta);
  set_int("checkpoint_every", "--checkpoint-every", opt.checkpoint_every);
}

int run_synth(const std::string& surface, std::size_t n, const af::SynthParams& params,
              unsigned long long seed, const std::string& out) {
  af::Rng rng(seed);
  const af::SurfaceKind kind = af::parse_surface_kind(surface);
  const af::PointCloud3 cloud = af::synth_surface(kind, n, params, rng);
  af::write_cloud(out, cloud);
  af::log_info(std::string("wrote ") + std::to_string(cloud.size()) + " points to " + out);
  return 0;
}

int run_fit(const CLI::App& cmd, FitOptions opt) {
  if (!opt.config_path.empty()) apply_fit_config(cmd, opt.config_path, opt);

  const af::PointCloud3 raw = af::read_cloud(opt.target_path);
  const af::NormalizeResult norm = af::normalize_unit_ball(raw);

  af::TrainConfig cfg;
  cfg.charts = opt.charts;
  cfg.hidden_width = opt.hidden_width;
  cfg.uv_samples_total = opt.uv_samples;
  cfg.iterations = opt.iterations;
  cfg.lr = opt.lr;
  cfg.weights.rec = opt.lambda_rec;
  cfg.weights.occ = opt.lambda_occ;
  cfg.weights.dist = opt.lambda_dist;
  cfg.tau = opt.tau;
  cfg.metric_eps = opt.metric_eps;
  cfg.seed = opt.seed;

  std::filesystem::create_directories(opt.out_dir);
  const std::string atlas_path = opt.out_dir + "/atlas.mna";
  const std::string history_path = opt.out_dir + "/history.csv";
  const std::string run_path = opt.out_dir + "/run.json";

  af::Trainer trainer(norm.cloud, cfg);
  std::vector<af::HistoryRow> history;
  history.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int i = 0; i < cfg.iterations; ++i) {
    const af::StepStats s = trainer.step(af::lr_at(cfg, i));
    history.push_back({i, s.loss_rec, s.loss_occ, s.loss_dist, s.total, s.lr});
    if (opt.checkpoint_every > 0 && (i + 1) % opt.checkpoint_every == 0 &&
        i + 1 < cfg.iterations) {
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint_%06d.mna", i + 1);
      trainer.atlas().frame = norm.frame;
      af::save_atlas(opt.out_dir + name, trainer.atlas());
    }
    if ((i + 1) % 100 == 0 || i + 1 == cfg.iterations) {
      af::log_info("step " + std::to_string(i + 1) + "/" + std::to_string(cfg.iterations) +
                   " total " + std::to_string(s.total));
    }
  }

  af::MinimalAtlas& atlas = trainer.atlas();
  atlas.frame = norm.frame;

  af::InferenceConfig icfg;
  icfg.probe_samples = opt.probe_samples;
  icfg.eta = opt.eta;
  af::Rng cal_rng(opt.seed + kCalibrationSeedOffset);
  const double c = af::estimate_label_frequency(atlas, icfg, cal_rng);

  af::save_atlas(atlas_path, atlas);
  af::write_history_csv(history_path, history);

  nlohmann::ordered_json run;
  run["command"] = "fit";
  run["target"] = opt.target_path;
  run["points"] = raw.size();
  run["frame"] = {{"center", {norm.frame.center.x, norm.frame.center.y, norm.frame.center.z}},
                  {"scale", norm.frame.scale}};
  run["config"] = {{"charts", cfg.charts},
                   {"hidden_width", cfg.hidden_width},
                   {"uv_samples", cfg.uv_samples_total},
                   {"iterations", cfg.iterations},
                   {"lr", cfg.lr},
                   {"lr_milestones", cfg.lr_milestones},
                   {"lr_decay", cfg.lr_decay},
                   {"lambda_rec", cfg.weights.rec},
                   {"lambda_occ", cfg.weights.occ},
                   {"lambda_dist", cfg.weights.dist},
                   {"tau", cfg.tau},
                   {"metric_eps", cfg.metric_eps},
                   {"seed", cfg.seed},
                   {"probe_samples", icfg.probe_samples},
                   {"eta", icfg.eta},
                   {"checkpoint_every", opt.checkpoint_every}};
  if (!history.empty()) {
    const af::HistoryRow& last = history.back();
    run["final"] = {{"loss_rec", last.loss_rec},
                    {"loss_occ", last.loss_occ},
                    {"loss_dist", last.loss_dist},
                    {"total", last.total},
                    {"lr", last.lr}};
  }
  run["label_frequency"] = c;
  std::ofstream rf(run_path);
  af::require(static_cast<bool>(rf), af::ErrorKind::Io, "cannot write " + run_path);
  rf << run.dump(2) << "\n";

  af::log_info("fit complete, atlas at " + atlas_path);
  return 0;
}

// Loads an atlas and calibrates the label frequency on the fly when the
// checkpoint predates calibration.
af::MinimalAtlas load_ready_atlas(const std::string& path, unsigned long long seed) {
  af::MinimalAtlas atlas = af::load_atlas(path);
  if (!atlas.has_label_frequency) {
    af::InferenceConfig icfg;
    af::Rng rng(seed + kCalibrationSeedOffset);
    af::estimate_label_frequency(atlas, icfg, rng);
    af::log_info("calibrated label frequency " + std::to_string(atlas.label_frequency));
  }
  return atlas;
}

int run_extract(const std::string& atlas_path, std::size_t n, const std::string& out_cloud,
                const std::string& out_mesh, const std::string& out_provenance, int grid_res,
                unsigned long long seed) {
  const af::MinimalAtlas atlas = load_ready_atlas(atlas_path, seed);
  af::InferenceConfig icfg;
  icfg.grid_res = grid_res;

  if (!out_cloud.empty() || !out_provenance.empty()) {
    af::Rng rng(seed + kExtractSeedOffset);
    const af::ExtractedCloud ec = af::extract_point_cloud(atlas, n, icfg, rng);
    if (!out_cloud.empty()) {
      af::write_cloud(out_cloud, af::denormalize(ec.points, atlas.frame));
      af::log_info("wrote " + std::to_string(ec.points.size()) + " points to " + out_cloud);
    }
    if (!out_provenance.empty()) {
      std::ofstream pf(out_provenance);
      af::require(static_cast<bool>(pf), af::ErrorKind::Io, "cannot write " + out_provenance);
      pf << "chart,u,v\n";
      char line[128];
      for (std::size_t i = 0; i < ec.points.size(); ++i) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", ec.chart[i], ec.uv[i].x,
                      ec.uv[i].y);
        pf << line;
      }
    }
  }
  if (!out_mesh.empty()) {
    af::TriangleMesh mesh = af::extract_mesh(atlas, icfg);
    mesh.vertices = af::denormalize(mesh.vertices, atlas.frame);
    af::write_obj(out_mesh, mesh);
    af::log_info("wrote mesh with " + std::to_string(mesh.vertices.size()) + " vertices, " +
                 std::to_string(mesh.triangles.size()) + " triangles to " + out_mesh);
  }
  return 0;
}

int run_eval(const std::string& atlas_path, const std::string& target_path, std::size_t n,
             int grid_res, unsigned long long seed, const std::string& out) {
  const af::MinimalAtlas atlas = load_ready_atlas(atlas_path, seed);
  const af::PointCloud3 raw = af::read_cloud(target_path);

  // The target is scored in the atlas frame so distances match training.
  af::PointCloud3 target;
  target.reserve(raw.size());
  for (const af::Vec3& p : raw) {
    target.push_back({(p.x - atlas.frame.center.x) / atlas.frame.scale,
                      (p.y - atlas.frame.center.y) / atlas.frame.scale,
                      (p.z - atlas.frame.center.z) / atlas.frame.scale});
  }

  af::InferenceConfig icfg;
  icfg.grid_res = grid_res;
  af::Rng rng(seed + kExtractSeedOffset);
  const af::EvalReport report = af::evaluate(atlas, target, n, icfg, rng);
  const std::string text = af::eval_report_json(report);
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out);
    af::require(static_cast<bool>(f), af::ErrorKind::Io, "cannot write " + out);
    f << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural atlas fitting for point cloud surfaces"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = library default)");

  // synth
  auto* synth = app.add_subcommand("synth", "Sample a benchmark surface");
  std::string synth_surface_name = "sphere";
  std::size_t synth_n = 2500;
  af::SynthParams synth_params;
  unsigned long long synth_seed = 0;
  std::string synth_out;
  synth->add_option("--surface", synth_surface_name,
                    "sphere|torus|disk|two_spheres|open_cylinder");
  synth->add_option("--n", synth_n, "Number of points");
  synth->add_option("--radius", synth_params.radius, "Primary radius");
  synth->add_option("--minor-radius", synth_params.minor_radius, "Torus tube radius");
  synth->add_option("--height", synth_params.height, "Cylinder height");
  synth->add_option("--separation", synth_params.separation, "Center distance of the two spheres");
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--out", synth_out, "Output cloud (.xyz or .xyzb)")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit an atlas to a target cloud");
  FitOptions fopt;
  fit->add_option("--target", fopt.target_path, "Target cloud (.xyz or .xyzb)")->required();
  fit->add_option("--out", fopt.out_dir, "Run directory")->required();
  fit->add_option("--config", fopt.config_path, "Flat JSON config file");
  fit->add_option("--charts", fopt.charts, "Number of charts");
  fit->add_option("--hidden-width", fopt.hidden_width, "Hidden layer width");
  fit->add_option("--uv-samples", fopt.uv_samples, "Parametric samples per step");
  fit->add_option("--iterations", fopt.iterations, "Optimization steps");
  fit->add_option("--lr", fopt.lr, "Learning rate");
  fit->add_option("--lambda-rec", fopt.lambda_rec, "Reconstruction weight");
  fit->add_option("--lambda-occ", fopt.lambda_occ, "Occupancy weight");
  fit->add_option("--lambda-dist", fopt.lambda_dist, "Distortion weight");
  fit->add_option("--tau", fopt.tau, "Occupancy decision threshold");
  fit->add_option("--metric-eps", fopt.metric_eps, "Metric tensor regularizer");
  fit->add_option("--seed", fopt.seed, "RNG seed");
  fit->add_option("--probe-samples", fopt.probe_samples, "Calibration probe count");
  fit->add_option("--eta", fopt.eta, "Top fraction for label frequency calibration");
  fit->add_option("--checkpoint-every", fopt.checkpoint_every,
                  "Save an intermediate atlas every N steps (0 = off)");

  // extract
  auto* extract = app.add_subcommand("extract", "Sample a fitted atlas");
  std::string ex_atlas, ex_cloud, ex_mesh, ex_prov;
  std::size_t ex_n = 2500;
  int ex_grid = 64;
  unsigned long long ex_seed = 0;
  extract->add_option("--atlas", ex_atlas, "Fitted atlas (.mna)")->required();
  extract->add_option("--n", ex_n, "Points to extract");
  extract->add_option("--out", ex_cloud, "Output cloud (.xyz or .xyzb)");
  extract->add_option("--mesh", ex_mesh, "Output mesh (.obj)");
  extract->add_option("--provenance", ex_prov, "Per-point chart and uv CSV");
  extract->add_option("--grid-res", ex_grid, "Mesh lattice resolution");
  extract->add_option("--seed", ex_seed, "RNG seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a fitted atlas against a target");
  std::string ev_atlas, ev_target, ev_out;
  std::size_t ev_n = 2500;
  int ev_grid = 64;
  unsigned long long ev_seed = 0;
  eval->add_option("--atlas", ev_atlas, "Fitted atlas (.mna)")->required();
  eval->add_option("--target", ev_target, "Target cloud (.xyz or .xyzb)")->required();
  eval->add_option("--eval-size", ev_n, "Extracted points for scoring");
  eval->add_option("--grid-res", ev_grid, "Mesh lattice resolution");
  eval->add_option("--seed", ev_seed, "RNG seed");
  eval->add_option("--out", ev_out, "Report path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (threads > 0) af::set_threads(threads);

  try {
    if (synth->parsed()) {
      return run_synth(synth_surface_name, synth_n, synth_params, synth_seed, synth_out);
    }
    if (fit->parsed()) {
      return run_fit(*fit, fopt);
    }
    if (extract->parsed()) {
      af::require(!ex_cloud.empty() || !ex_mesh.empty() || !ex_prov.empty(),
                  af::ErrorKind::InvalidInput,
                  "extract needs at least one of --out, --mesh, --provenance");
      return run_extract(ex_atlas, ex_n, ex_cloud, ex_mesh, ex_prov, ex_grid, ex_seed);
    }
    if (eval->parsed()) {
      return run_eval(ev_atlas, ev_target, ev_n, ev_grid, ev_seed, ev_out);
    }
  } catch (const af::Error& e) {
    std::cerr << "atlasforge: " << e.what() << "\n";
    switch (e.kind()) {
      case af::ErrorKind::NumericalError:
        return 2;
      case af::ErrorKind::EmptyDomain:
      case af::ErrorKind::DegenerateField:
        return 3;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "atlasforge: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
