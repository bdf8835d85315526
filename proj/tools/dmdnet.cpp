#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmdnet/dmdnet.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct ReportOptions {
  std::string path;
  std::string format = "csv";
  bool no_timestamp = false;
};

void add_report_options(CLI::App* cmd, ReportOptions& r) {
  cmd->add_option("--report", r.path, "Report file")->required();
  cmd->add_option("--format", r.format, "Report format")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_flag("--no-timestamp", r.no_timestamp, "Omit the timestamp header");
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Rows of (column -> value) written as CSV or as a JSON object with a rows array.
void write_report(const ReportOptions& opt, const std::vector<std::string>& columns,
                  const std::vector<std::vector<std::string>>& rows, const ordered_json& summary = {}) {
  std::string out;
  if (opt.format == "csv") {
    if (!opt.no_timestamp) out += "# generated " + timestamp() + "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
      out += '\n';
    }
    for (const auto& [key, value] : summary.items()) out += "# " + key + " " + value.dump() + "\n";
  } else {
    ordered_json doc;
    if (!opt.no_timestamp) doc["generated"] = timestamp();
    doc["rows"] = ordered_json::array();
    for (const auto& row : rows) {
      ordered_json r;
      for (std::size_t i = 0; i < row.size(); ++i) {
        // Numeric cells go out as numbers.
        char* end = nullptr;
        const double v = std::strtod(row[i].c_str(), &end);
        if (!row[i].empty() && end && *end == '\0') r[columns[i]] = v;
        else r[columns[i]] = row[i];
      }
      doc["rows"].push_back(r);
    }
    if (!summary.empty()) doc["summary"] = summary;
    out = doc.dump(2) + "\n";
  }
  dmdnet::io::write_file(opt.path, out);
}

dmdnet::net::NetParams<float> load_params(const std::string& path) {
  return dmdnet::io::load_checkpoint(dmdnet::io::read_file(path));
}

std::vector<fs::path> test_split(const fs::path& manifest) {
  const auto m = dmdnet::io::load_manifest(manifest);
  auto paths = m.test();
  if (paths.empty()) throw dmdnet::ConfigError("manifest '" + manifest.string() + "' has no test meshes");
  return paths;
}

int run_denoise(const std::string& in, const std::string& ckpt, const std::string& out) {
  const auto params = load_params(ckpt);
  const auto cfg = dmdnet::net::infer_config(params);
  dmdnet::io::save_mesh(out, dmdnet::denoise_mesh(dmdnet::io::load_mesh(in), params, cfg));
  return 0;
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::size_t> steps) {
  auto cfg = dmdnet::train::parse_train_config(dmdnet::io::read_file(config_path), fs::path(config_path).parent_path());
  if (seed) cfg.seed = *seed;
  if (steps) cfg.steps = *steps;
  if (cfg.manifest.empty()) throw dmdnet::ConfigError("config has no manifest");
  if (cfg.checkpoint.empty()) throw dmdnet::ConfigError("config has no checkpoint path");

  std::vector<dmdnet::Mesh> meshes;
  for (const auto& p : dmdnet::io::load_manifest(cfg.manifest).train)
    meshes.push_back(dmdnet::canonicalize(dmdnet::io::load_mesh(p)).first);
  if (meshes.empty()) throw dmdnet::ConfigError("manifest has no training meshes");

  auto params = dmdnet::net::init_params<float>(cfg.net, cfg.seed);
  auto state = dmdnet::train::OptimizerState<float>::zeros_like(params);
  auto save = [&] { dmdnet::io::write_file(cfg.checkpoint, dmdnet::io::save_checkpoint(params)); };
  double window = 0.0;
  std::size_t count = 0;
  std::cout << "step,loss\n";
  dmdnet::train::train_loop<float>(meshes, cfg, params, state, [&](std::size_t s, const dmdnet::train::StepResult& r) {
    window += r.loss;
    ++count;
    if (cfg.log_every && (s + 1) % cfg.log_every == 0) {
      std::cout << s + 1 << ',' << num(window / static_cast<double>(count)) << '\n';
      window = 0.0;
      count = 0;
    }
    if (cfg.checkpoint_every && (s + 1) % cfg.checkpoint_every == 0) save();
  });
  save();
  if (state.faults) std::cerr << "dmdnet: " << state.faults << " steps rejected for non-finite gradients\n";
  return 0;
}

constexpr std::array<const char*, 7> kEvalColumns = {"mesh",       "vertex",         "normal_deg", "chamfer",
                                                    "ref_vertex", "ref_normal_deg", "ref_chamfer"};

int run_eval(const std::string& manifest, const std::string& ckpt, const ReportOptions& report,
             const std::string& kind, double level, std::uint64_t seed) {
  const auto params = load_params(ckpt);
  const auto cfg = dmdnet::net::infer_config(params);
  const auto result =
      dmdnet::evaluate(test_split(manifest), params, cfg, dmdnet::parse_noise_kind(kind), level, seed);
  for (const auto& s : result.skipped) std::cerr << "dmdnet: skipped " << s << '\n';
  // Vertex and Chamfer columns are in units of 1e-4.
  std::vector<std::vector<std::string>> rows;
  auto cells = [](const std::string& name, const dmdnet::loss::Metrics& m, const dmdnet::loss::Metrics& r) {
    return std::vector<std::string>{name, num(m.vertex * 1e4), num(m.normal_deg), num(m.chamfer * 1e4),
                                    num(r.vertex * 1e4), num(r.normal_deg), num(r.chamfer * 1e4)};
  };
  for (const auto& r : result.rows) rows.push_back(cells(r.mesh, r.model, r.reference));
  ordered_json summary;
  if (!result.rows.empty()) {
    const auto mean = cells("mean", result.mean(false), result.mean(true));
    for (std::size_t i = 1; i < mean.size(); ++i) summary["mean_" + std::string(kEvalColumns[i])] = std::stod(mean[i]);
  }
  write_report(report, {kEvalColumns.begin(), kEvalColumns.end()}, rows, summary);
  return 0;
}

int run_noise(const std::string& in, const std::string& out, const std::string& kind, double level,
              std::uint64_t seed, double plus, double minus) {
  const auto mesh = dmdnet::io::load_mesh(in);
  // Levels are given in canonical units and scaled to the mesh's extent.
  const auto [canonical, tf] = dmdnet::canonicalize(mesh);
  dmdnet::NoiseSpec spec;
  spec.kind = dmdnet::parse_noise_kind(kind);
  spec.amplitude = level / tf.scale;
  spec.impulse_plus = plus;
  spec.impulse_minus = minus;
  spec.seed = seed;
  dmdnet::io::save_mesh(out, dmdnet::apply_noise(mesh, spec));
  return 0;
}

int run_features(const std::string& in, const std::string& out) {
  const auto mesh = dmdnet::io::load_mesh(in);
  const auto f = dmdnet::diffgeo::local_features(mesh);
  std::string csv = "vertex,nx,ny,nz,mean_curvature,gaussian_curvature\n";
  for (Eigen::Index v = 0; v < f.values.rows(); ++v) {
    csv += std::to_string(v);
    for (int c = 0; c < 5; ++c) csv += "," + num(f.values(v, c));
    csv += '\n';
  }
  dmdnet::io::write_file(out, csv);
  return 0;
}

int run_equivariance(const std::string& manifest, const std::string& ckpt, std::size_t rotations,
                     const ReportOptions& report, std::uint64_t seed) {
  const auto params = load_params(ckpt);
  const auto cfg = dmdnet::net::infer_config(params);
  std::vector<dmdnet::Mesh> meshes;
  std::vector<std::string> names;
  for (const auto& p : test_split(manifest)) {
    try {
      meshes.push_back(dmdnet::io::load_mesh(p));
      names.push_back(p.string());
    } catch (const dmdnet::Error& e) {
      std::cerr << "dmdnet: skipped " << p.string() << ": " << e.what() << '\n';
    }
  }
  const auto r = dmdnet::rotation_equivariance(meshes, params, cfg, rotations, seed);
  write_report(report, {"meshes", "rotations", "vertex", "normal_deg", "chamfer"},
               {{std::to_string(meshes.size()), std::to_string(rotations), num(r.vertex * 1e4), num(r.normal_deg),
                 num(r.chamfer * 1e4)}});
  return 0;
}

int run_bench(std::size_t min_verts, std::size_t max_verts, std::size_t steps, std::size_t repeats,
              const std::string& ckpt, const ReportOptions& report, std::uint64_t seed) {
  const auto params = ckpt.empty() ? dmdnet::net::init_params<float>(dmdnet::net::NetConfig{}, seed) : load_params(ckpt);
  const auto cfg = dmdnet::net::infer_config(params);
  const auto rows = dmdnet::bench(min_verts, max_verts, steps, repeats, params, cfg);
  std::vector<std::vector<std::string>> cells;
  std::vector<double> faces, seconds;
  for (const auto& r : rows) {
    cells.push_back({std::to_string(r.vertices), std::to_string(r.faces), num(r.seconds)});
    faces.push_back(static_cast<double>(r.faces));
    seconds.push_back(r.seconds);
  }
  ordered_json summary;
  if (rows.size() >= 2) {
    const auto fit = dmdnet::fit_line(faces, seconds);
    summary["slope_seconds_per_face"] = fit.slope;
    summary["intercept_seconds"] = fit.intercept;
    summary["r2"] = fit.r2;
    std::cout << "linear fit over faces: r2 " << num(fit.r2) << '\n';
  }
  write_report(report, {"vertices", "faces", "seconds"}, cells, summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mesh denoising with a primal-dual graph network"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();

  std::string in, out, ckpt, manifest, config, kind = "gaussian";
  double level = 0.0, plus = 0.15, minus = 0.15;
  std::size_t rotations = 5, min_verts = 500, max_verts = 50000, steps = 8, repeats = 3;
  std::optional<std::size_t> train_steps;
  ReportOptions report;

  auto* denoise = app.add_subcommand("denoise", "Denoise one mesh");
  denoise->add_option("--in", in, "Input mesh (.obj or .off)")->required();
  denoise->add_option("--ckpt", ckpt, "Checkpoint")->required();
  denoise->add_option("--out", out, "Output mesh")->required();

  auto* train = app.add_subcommand("train", "Train from a key = value config");
  train->add_option("--config", config, "Config file")->required();
  train->add_option("--steps", train_steps, "Override the step count");

  auto* eval = app.add_subcommand("eval", "Metrics on the manifest's test meshes");
  eval->add_option("--manifest", manifest, "Dataset manifest")->required();
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--kind", kind, "Noise kind added to the ground truth")->capture_default_str();
  eval->add_option("--level", level, "Noise level in canonical units")->capture_default_str();
  add_report_options(eval, report);

  auto* noise = app.add_subcommand("noise", "Add synthetic noise to a mesh");
  noise->add_option("--in", in, "Input mesh")->required();
  noise->add_option("--kind", kind, "gaussian, uniform, gamma or impulse")->required();
  noise->add_option("--level", level, "Noise level in canonical units")->required();
  noise->add_option("--impulse-plus", plus, "Impulse probability of +level")->capture_default_str();
  noise->add_option("--impulse-minus", minus, "Impulse probability of -level")->capture_default_str();
  noise->add_option("--out", out, "Output mesh")->required();

  auto* features = app.add_subcommand("features", "Per-vertex normal and curvatures as CSV");
  features->add_option("--in", in, "Input mesh")->required();
  features->add_option("--out", out, "Output CSV")->required();

  auto* equiv = app.add_subcommand("equivariance", "Rotation equivariance study");
  equiv->add_option("--manifest", manifest, "Dataset manifest")->required();
  equiv->add_option("--ckpt", ckpt, "Checkpoint")->required();
  equiv->add_option("--rotations", rotations, "Rotations per mesh")->capture_default_str();
  add_report_options(equiv, report);

  auto* benchmark = app.add_subcommand("bench", "Forward-pass time against mesh size");
  benchmark->add_option("--min-verts", min_verts, "Smallest mesh")->capture_default_str();
  benchmark->add_option("--max-verts", max_verts, "Largest mesh")->capture_default_str();
  benchmark->add_option("--steps", steps, "Number of mesh sizes")->capture_default_str();
  benchmark->add_option("--repeats", repeats, "Timed runs per size")->capture_default_str();
  benchmark->add_option("--ckpt", ckpt, "Checkpoint (default: random weights from --seed)");
  add_report_options(benchmark, report);

  // --seed is accepted before or after the subcommand.
  for (auto* sub : {denoise, train, eval, noise, features, equiv, benchmark})
    sub->add_option("--seed", seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "dmdnet: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*denoise) return run_denoise(in, ckpt, out);
    if (*train) {
      const bool seeded = train->count("--seed") > 0 || app.count("--seed") > 0;
      return run_train(config, seeded ? std::optional<std::uint64_t>(seed) : std::nullopt, train_steps);
    }
    if (*eval) return run_eval(manifest, ckpt, report, kind, level, seed);
    if (*noise) return run_noise(in, out, kind, level, seed, plus, minus);
    if (*features) return run_features(in, out);
    if (*equiv) return run_equivariance(manifest, ckpt, rotations, report, seed);
    if (*benchmark) return run_bench(min_verts, max_verts, steps, repeats, ckpt, report, seed);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "dmdnet: error: " << msg << '\n';
    return 1;
  }
  return 1;
}
