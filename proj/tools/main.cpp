// gemmesh: batch front end for dataset synthesis, training, evaluation, and
// equivariance verification. Exit codes: 0 success, 1 usage/config error,
// 2 verification tolerance exceeded, 3 numeric failure.
#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "gem/dataset.hpp"
#include "gem/verify.hpp"

using namespace gem;
using nlohmann::json;

namespace {

// ---- run manifests ---------------------------------------------------------

struct Manifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::chrono::steady_clock::time_point started =
      std::chrono::steady_clock::now();

  void write(const std::filesystem::path& dir) {
    json j;
    j["command"] = command;
    j["config"] = config_path;
    j["seed"] = seed;
    j["inputs"] = json::array();
    for (const auto& p : inputs)
      j["inputs"].push_back({{"path", p.string()}, {"hash", file_hash(p)}});
    j["outputs"] = json::array();
    for (const auto& p : outputs)
      j["outputs"].push_back({{"path", p.string()}, {"hash", file_hash(p)}});
    j["duration_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      started)
            .count();
    std::ofstream out(dir / "manifest.json");
    if (!out)
      throw IoError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(2) << '\n';
  }
};

// GEMMESH_SEED wins over --seed when set.
std::uint64_t effective_seed(std::uint64_t flag_seed) {
  if (const char* env = std::getenv("GEMMESH_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigInvalid("GEMMESH_SEED is not an unsigned integer");
    }
  }
  return flag_seed;
}

// Index-sharded worker pool; the first exception wins and is rethrown.
void parallel_for(int jobs, int count, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      while (!failed) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---- config file -----------------------------------------------------------

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigInvalid("config: unknown key '" + key + "' in " + where);
}

struct RunConfig {
  nn::ModelConfig model;
  nn::TrainConfig train;
  GeometryConfig geometry;
};

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigInvalid(path.string() + ": " + e.what());
  }
  reject_unknown(j, {"version", "model", "train", "geometry"}, "config root");
  if (j.at("version").get<int>() != 1)
    throw ConfigInvalid("config: unsupported version");

  RunConfig cfg;
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m,
                   {"conv_kind", "levels", "widths", "blocks", "time_steps",
                    "seed", "target", "max_order", "nonlin_samples", "with_bc"},
                   "model");
    if (m.contains("conv_kind"))
      cfg.model.conv_kind =
          nn::conv_kind_from_string(m["conv_kind"].get<std::string>());
    if (m.contains("levels")) cfg.model.levels = m["levels"].get<int>();
    if (m.contains("widths"))
      cfg.model.widths = m["widths"].get<std::vector<int>>();
    if (m.contains("blocks")) cfg.model.blocks = m["blocks"].get<int>();
    if (m.contains("time_steps"))
      cfg.model.time_steps = m["time_steps"].get<int>();
    if (m.contains("seed")) cfg.model.seed = m["seed"].get<std::uint64_t>();
    if (m.contains("target"))
      cfg.model.target = nn::target_from_string(m["target"].get<std::string>());
    if (m.contains("max_order"))
      cfg.model.max_order = m["max_order"].get<int>();
    if (m.contains("nonlin_samples"))
      cfg.model.nonlin_samples = m["nonlin_samples"].get<int>();
    if (m.contains("with_bc")) cfg.model.with_bc = m["with_bc"].get<bool>();
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t, {"epochs", "batch_size", "lr", "seed"}, "train");
    if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<int>();
    if (t.contains("batch_size"))
      cfg.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("lr")) cfg.train.lr = t["lr"].get<double>();
    if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
  }
  if (j.contains("geometry")) {
    const json& g = j["geometry"];
    reject_unknown(g,
                   {"radius", "radius_scale", "ratios", "radius_factors",
                    "fps_seed"},
                   "geometry");
    if (g.contains("radius")) cfg.geometry.radius = g["radius"].get<double>();
    if (g.contains("radius_scale"))
      cfg.geometry.radius_scale = g["radius_scale"].get<double>();
    if (g.contains("ratios"))
      cfg.geometry.ratios = g["ratios"].get<std::vector<double>>();
    if (g.contains("radius_factors"))
      cfg.geometry.radius_factors =
          g["radius_factors"].get<std::vector<double>>();
    if (g.contains("fps_seed"))
      cfg.geometry.fps_seed = g["fps_seed"].get<std::uint64_t>();
  }
  return cfg;
}

// ---- shared sample plumbing ------------------------------------------------

nn::Sample to_model_sample(const LabeledSample& ls, const nn::ModelConfig& mc,
                           const GeometryConfig& gc) {
  nn::Sample s;
  s.geo = std::make_shared<SampleGeometry>(build_sample_geometry(ls.mesh, gc));
  if (mc.with_bc) s.geo->boundary_condition = ls.spec.flow;
  s.input = mc.conv_kind == nn::ConvKind::gem
                ? gem_input_features(*s.geo).values
                : baseline_input_features(*s.geo);
  s.label = ls.labels;
  return s;
}

void check_sample_compat(const LabeledSample& ls, const nn::ModelConfig& mc,
                         const std::filesystem::path& stem) {
  if (ls.target != nn::to_string(mc.target))
    throw ConfigInvalid(stem.string() + ": sample target '" + ls.target +
                        "' does not match model target");
  if (ls.time_steps != mc.time_steps)
    throw ConfigInvalid(stem.string() + ": sample time steps do not match");
}

Mat3 random_rotation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

// Rotates mesh vertices and every 3-vector time-step block of the labels.
void rotate_sample(LabeledSample& ls, const Mat3& R) {
  ls.mesh.vertices = (ls.mesh.vertices * R.transpose()).eval();
  for (Index c = 0; c + 2 < ls.labels.cols(); c += 3)
    ls.labels.middleCols<3>(c) =
        (ls.labels.middleCols<3>(c) * R.transpose()).eval();
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string kind = "single";
  int count = 1;
  std::uint64_t seed = 0;
  std::pair<double, double> flow_range{kBcLow, kBcHigh};
  std::string out;
  std::string target = "wss";
  int time_steps = 1;
  int segments = 36;
  double spacing = 0.30;
  int jobs = 1;
};

int cmd_synth(const SynthArgs& args) {
  if (args.count < 1) throw ConfigInvalid("synth: --count must be positive");
  if (args.flow_range.second <= args.flow_range.first)
    throw ConfigInvalid("synth: --flow-range must be an increasing pair");
  const bool single = args.kind == "single";
  if (!single && args.kind != "bifurcating")
    throw ConfigInvalid("synth: --kind must be single or bifurcating");
  if (args.target != "wss" && args.target != "pressure")
    throw ConfigInvalid("synth: --target must be wss or pressure");
  const std::uint64_t seed = effective_seed(args.seed);

  Manifest manifest;
  manifest.command = "synth";
  manifest.seed = seed;
  const std::filesystem::path out(args.out);
  std::filesystem::create_directories(out);

  SynthConfig sc;
  sc.segments = args.segments;
  sc.spacing = args.spacing;

  std::vector<LabeledSample> samples(args.count);
  parallel_for(args.jobs, args.count, [&](int i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    ArterySample drawn =
        single ? synth_single(s, sc) : synth_bifurcating(s, sc);
    LabeledSample& ls = samples[i];
    ls.spec = drawn.spec;
    ls.mesh = std::move(drawn.mesh);
    // flow is drawn uniformly on the training range; remap it affinely onto
    // the requested range before labelling
    const double u = (ls.spec.flow - kBcLow) / (kBcHigh - kBcLow);
    ls.spec.flow =
        args.flow_range.first +
        u * (args.flow_range.second - args.flow_range.first);
    ls.time_steps = args.time_steps;
    ls.target = args.target;
    ls.labels = args.target == "wss"
                    ? wss_labels(ls.spec, ls.mesh, ls.spec.flow, args.time_steps)
                    : pressure_labels(ls.spec, ls.mesh, ls.spec.flow,
                                      args.time_steps);
  });

  json stats;
  stats["kind"] = args.kind;
  stats["count"] = args.count;
  double beta = 0, beta_prime = 0, gamma = 0, r_pmv = 0, r_dmv = 0, r_sb = 0,
         radius = 0, flow = 0, vertices = 0, abs_eps = 0;
  for (int i = 0; i < args.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%04d", i);
    write_sample(samples[i], out / name);
    for (const char* ext : {".obj", ".json", ".csv"})
      manifest.outputs.push_back(out / (std::string(name) + ext));
    const ArterySpec& sp = samples[i].spec;
    beta += sp.beta;
    beta_prime += sp.beta_prime;
    gamma += sp.gamma;
    r_pmv += sp.r_pmv;
    r_dmv += sp.r_dmv;
    r_sb += sp.r_sb;
    radius += sp.base_radius;
    flow += sp.flow;
    abs_eps += std::abs(sp.eps_law);
    vertices += static_cast<double>(samples[i].mesh.vertex_count());
  }
  const double n = args.count;
  stats["mean_flow"] = flow / n;
  stats["mean_vertices"] = vertices / n;
  if (single) {
    stats["mean_radius"] = radius / n;
  } else {
    stats["mean_beta"] = beta / n;
    stats["mean_beta_prime"] = beta_prime / n;
    stats["mean_gamma"] = gamma / n;
    stats["mean_r_pmv"] = r_pmv / n;
    stats["mean_r_dmv"] = r_dmv / n;
    stats["mean_r_sb"] = r_sb / n;
    stats["mean_abs_eps_law"] = abs_eps / n;
  }
  std::ofstream(out / "stats.json") << stats.dump(2) << '\n';
  manifest.outputs.push_back(out / "stats.json");
  manifest.write(out);
  std::cout << "synth: wrote " << args.count << " samples to " << out.string()
            << '\n';
  return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out_path) {
  RunConfig cfg = load_run_config(config_path);
  cfg.train.seed = effective_seed(cfg.train.seed);

  Manifest manifest;
  manifest.command = "train";
  manifest.config_path = config_path;
  manifest.seed = cfg.train.seed;
  manifest.inputs.push_back(config_path);
  const std::filesystem::path out(out_path);
  std::filesystem::create_directories(out);

  const auto stems = list_samples(data);
  if (stems.empty()) throw ConfigInvalid("train: no samples in " + data);
  std::vector<nn::Sample> dataset;
  dataset.reserve(stems.size());
  for (const auto& stem : stems) {
    const LabeledSample ls = read_sample(stem);
    check_sample_compat(ls, cfg.model, stem);
    dataset.push_back(to_model_sample(ls, cfg.model, cfg.geometry));
    for (const char* ext : {".obj", ".json", ".csv"})
      manifest.inputs.push_back(stem.string() + ext);
  }

  nn::Model model(cfg.model);
  const nn::TrainResult result = nn::train(model, dataset, cfg.train);

  nn::save_checkpoint(result.best, (out / "model.ckpt").string());
  {
    std::ofstream hist(out / "history.csv");
    hist.precision(17);
    hist << "epoch,split,loss,nmae,eps\n";
    for (const nn::HistoryRow& row : result.history)
      hist << row.epoch << ',' << row.split << ',' << row.loss << ','
           << row.nmae << ',' << row.eps << '\n';
  }
  manifest.outputs.push_back(out / "model.ckpt");
  manifest.outputs.push_back(out / "history.csv");
  {
    const nn::DataSplit split =
        nn::split_dataset(dataset.size(), cfg.train.seed);
    json extra;
    extra["split"] = {{"train", split.train},
                      {"val", split.val},
                      {"test", split.test}};
    extra["best_val_loss"] = result.best_val_loss;
    extra["test_nmae"] = result.test_metrics.nmae;
    extra["test_eps"] = result.test_metrics.eps;
    std::ofstream(out / "train_summary.json") << extra.dump(2) << '\n';
  }
  manifest.outputs.push_back(out / "train_summary.json");
  manifest.write(out);
  std::cout << "train: best validation loss " << result.best_val_loss
            << ", test nmae " << result.test_metrics.nmae << '\n';
  return 0;
}

// ---- eval ------------------------------------------------------------------

double percentile(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

struct EvalArgs {
  std::string checkpoint, data, out;
  std::string rotate = "none";
  std::string config;  // optional geometry override
  std::uint64_t seed = 0;
  int jobs = 1;
  bool export_vtk = false;
};

int cmd_eval(const EvalArgs& args) {
  if (args.rotate != "none" && args.rotate != "random")
    throw ConfigInvalid("eval: --rotate must be none or random");
  const std::uint64_t seed = effective_seed(args.seed);

  Manifest manifest;
  manifest.command = "eval";
  manifest.config_path = args.config;
  manifest.seed = seed;
  manifest.inputs.push_back(args.checkpoint);
  const std::filesystem::path out(args.out);
  std::filesystem::create_directories(out);

  GeometryConfig geometry;
  if (!args.config.empty()) {
    geometry = load_run_config(args.config).geometry;
    manifest.inputs.push_back(args.config);
  }

  const nn::Checkpoint ckpt = nn::load_checkpoint(args.checkpoint);
  const nn::ModelConfig mc = nn::ModelConfig::from_json(ckpt.config_json);
  nn::Model model(mc);
  nn::apply_checkpoint(ckpt, model);

  const auto stems = list_samples(args.data);
  if (stems.empty()) throw ConfigInvalid("eval: no samples in " + args.data);
  const int count = static_cast<int>(stems.size());
  std::vector<MatX> preds(count), labels(count);
  std::vector<Mesh> meshes(count);
  std::mutex model_mutex;  // forward passes share the model's buffers
  parallel_for(args.jobs, count, [&](int i) {
    LabeledSample ls = read_sample(stems[i]);
    check_sample_compat(ls, mc, stems[i]);
    if (args.rotate == "random")
      rotate_sample(ls, random_rotation(seed + static_cast<std::uint64_t>(i)));
    nn::Sample s = to_model_sample(ls, mc, geometry);
    labels[i] = s.label;
    meshes[i] = std::move(ls.mesh);
    std::lock_guard<std::mutex> lock(model_mutex);
    preds[i] = model.forward({s.geo.get()}, {s.input})[0];
  });
  for (const auto& stem : stems)
    for (const char* ext : {".obj", ".json", ".csv"})
      manifest.inputs.push_back(stem.string() + ext);

  std::vector<double> nmae(count), eps(count), dmax(count), dmean(count);
  for (int i = 0; i < count; ++i) {
    const Metrics m = compute_metrics({preds[i]}, {labels[i]});
    nmae[i] = m.nmae;
    eps[i] = m.eps;
    dmax[i] = m.delta_max;
    dmean[i] = m.delta_mean;
  }
  const Metrics pooled = compute_metrics(preds, labels);

  json report;
  report["rotate"] = args.rotate;
  report["samples"] = count;
  report["pooled"] = {{"nmae", pooled.nmae}, {"eps", pooled.eps}};
  std::ofstream csv(out / "metrics.csv");
  csv.precision(17);
  csv << "metric,mean,median,p75\n";
  const std::pair<const char*, std::vector<double>*> rows[] = {
      {"nmae", &nmae}, {"eps", &eps}, {"delta_max", &dmax},
      {"delta_mean", &dmean}};
  for (const auto& [name, xs] : rows) {
    const double mean =
        std::accumulate(xs->begin(), xs->end(), 0.0) / xs->size();
    const double median = percentile(*xs, 0.5);
    const double p75 = percentile(*xs, 0.75);
    csv << name << ',' << mean << ',' << median << ',' << p75 << '\n';
    report[name] = {{"mean", mean}, {"median", median}, {"p75", p75}};
  }
  std::ofstream(out / "metrics.json") << report.dump(2) << '\n';
  manifest.outputs.push_back(out / "metrics.csv");
  manifest.outputs.push_back(out / "metrics.json");

  if (args.export_vtk)
    for (int i = 0; i < count; ++i) {
      char name[48];
      std::snprintf(name, sizeof(name), "sample_%04d_pred.vtk", i);
      const std::string field = nn::to_string(mc.target);
      write_vtk(meshes[i], preds[i], field, out / name);
      manifest.outputs.push_back(out / name);
    }
  manifest.write(out);
  std::cout << "eval: mean nmae "
            << report["nmae"]["mean"].get<double>() << " over " << count
            << " samples\n";
  return 0;
}

// ---- verify ----------------------------------------------------------------

struct VerifyArgs {
  std::string checkpoint, mesh, out;
  std::string suite = "se3";
  std::string config;
  std::uint64_t seed = 1;
  double tolerance = 5e-3;
};

Mesh load_marked_mesh(const std::filesystem::path& path) {
  Mesh mesh = read_obj(path);
  std::filesystem::path side = path;
  side.replace_extension(".json");
  if (std::filesystem::exists(side)) read_markers(mesh, side);
  return mesh;
}

int cmd_verify(const VerifyArgs& args) {
  const std::uint64_t seed = effective_seed(args.seed);

  GeometryConfig geometry;
  if (!args.config.empty()) geometry = load_run_config(args.config).geometry;

  const nn::Checkpoint ckpt = nn::load_checkpoint(args.checkpoint);
  const nn::ModelConfig mc = nn::ModelConfig::from_json(ckpt.config_json);
  nn::Model model(mc);
  nn::apply_checkpoint(ckpt, model);
  const Mesh mesh = load_marked_mesh(args.mesh);

  json report;
  report["suite"] = args.suite;
  bool failed = false;

  if (args.suite == "se3" || args.suite == "gauge") {
    const TransformReport rep =
        args.suite == "se3" ? check_se3(model, mesh, geometry, seed)
                            : check_gauge(model, mesh, geometry, seed);
    report = json::parse(rep.to_json());
    report["suite"] = args.suite;
    report["tolerance"] = args.tolerance;
    failed = rep.max_rel > args.tolerance;
  } else if (args.suite == "remesh") {
    // refined mesh keeps the original vertices with ids 0..V-1; compare
    // predictions there (informational, no tolerance)
    const Mesh fine = remesh_refine(mesh);
    auto run = [&](const Mesh& m) {
      SampleGeometry geo = build_sample_geometry(m, geometry);
      if (mc.with_bc) geo.boundary_condition = 0.5 * (kBcLow + kBcHigh);
      const MatX in = mc.conv_kind == nn::ConvKind::gem
                          ? gem_input_features(geo).values
                          : baseline_input_features(geo);
      return model.forward({&geo}, {in})[0];
    };
    const MatX coarse_pred = run(mesh);
    const MatX fine_pred = run(fine);
    double scale = 1e-12, max_rel = 0.0, sum = 0.0;
    for (Index v = 0; v < mesh.vertex_count(); ++v)
      scale = std::max(scale, coarse_pred.row(v).norm());
    for (Index v = 0; v < mesh.vertex_count(); ++v) {
      const double rel =
          (fine_pred.row(v) - coarse_pred.row(v)).norm() / scale;
      max_rel = std::max(max_rel, rel);
      sum += rel;
    }
    report["max_rel"] = max_rel;
    report["mean_rel"] = sum / static_cast<double>(mesh.vertex_count());
    report["fine_vertices"] = fine.vertex_count();
  } else if (args.suite == "rf") {
    SampleGeometry geo = build_sample_geometry(mesh, geometry);
    // seed the mask at the vertex nearest the centroid
    const Vec3 centroid = mesh.vertices.colwise().mean().transpose();
    Index seed_vertex = 0;
    double best = 1e300;
    for (Index v = 0; v < mesh.vertex_count(); ++v) {
      const double d = (mesh.position(v) - centroid).norm();
      if (d < best) {
        best = d;
        seed_vertex = v;
      }
    }
    auto span = [&](const nn::ModelConfig& c) {
      const std::vector<char> mask = receptive_field(c, geo, seed_vertex);
      Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
      for (Index v = 0; v < mesh.vertex_count(); ++v)
        if (mask[static_cast<std::size_t>(v)]) {
          lo = lo.cwiseMin(mesh.position(v));
          hi = hi.cwiseMax(mesh.position(v));
        }
      return (hi - lo).norm();
    };
    nn::ModelConfig shallow = mc;
    shallow.levels = 1;
    shallow.widths = {mc.widths.front()};
    report["seed_vertex"] = seed_vertex;
    report["span_shallow"] = span(shallow);
    report["span_full"] = span(mc);
    report["reach_ratio"] =
        report["span_full"].get<double>() /
        std::max(report["span_shallow"].get<double>(), 1e-12);
  } else {
    throw ConfigInvalid("verify: --suite must be se3, gauge, remesh, or rf");
  }

  report["passed"] = !failed;
  std::cout << report.dump(2) << '\n';
  if (!args.out.empty()) {
    const std::filesystem::path out(args.out);
    std::filesystem::create_directories(out);
    std::ofstream(out / "report.json") << report.dump(2) << '\n';
    Manifest manifest;
    manifest.command = "verify";
    manifest.config_path = args.config;
    manifest.seed = seed;
    manifest.inputs.push_back(args.checkpoint);
    manifest.inputs.push_back(args.mesh);
    manifest.outputs.push_back(out / "report.json");
    manifest.write(out);
  }
  return failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gauge-equivariant mesh network toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "generate labeled artery samples");
  s->add_option("--kind", synth.kind, "single|bifurcating");
  s->add_option("--count", synth.count, "number of samples");
  s->add_option("--seed", synth.seed, "base seed; sample i uses seed+i");
  s->add_option("--flow-range", synth.flow_range,
                "inflow range a,b in ml/s")
      ->delimiter(',');
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--target", synth.target, "wss|pressure");
  s->add_option("--time-steps", synth.time_steps, "label time steps");
  s->add_option("--segments", synth.segments, "contour segments");
  s->add_option("--spacing", synth.spacing, "ring spacing / local radius");
  s->add_option("--jobs", synth.jobs, "worker threads");

  std::string train_config, train_data, train_out;
  CLI::App* t = app.add_subcommand("train", "train a model on a dataset");
  t->add_option("--config", train_config, "run config JSON")->required();
  t->add_option("--data", train_data, "dataset directory")->required();
  t->add_option("--out", train_out, "output directory")->required();

  EvalArgs eval;
  CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint, "model checkpoint")
      ->required();
  e->add_option("--data", eval.data, "dataset directory")->required();
  e->add_option("--rotate", eval.rotate, "none|random test rotation");
  e->add_option("--config", eval.config, "run config JSON (geometry section)");
  e->add_option("--seed", eval.seed, "rotation seed");
  e->add_option("--out", eval.out, "output directory")->required();
  e->add_option("--jobs", eval.jobs, "worker threads");
  e->add_flag("--vtk", eval.export_vtk, "export predictions as VTK");

  VerifyArgs verify;
  CLI::App* v = app.add_subcommand("verify", "equivariance / remesh checks");
  v->add_option("--checkpoint", verify.checkpoint, "model checkpoint")
      ->required();
  v->add_option("--mesh", verify.mesh, "OBJ mesh (markers in sidecar JSON)")
      ->required();
  v->add_option("--suite", verify.suite, "se3|gauge|remesh|rf");
  v->add_option("--config", verify.config,
                "run config JSON (geometry section)");
  v->add_option("--seed", verify.seed, "transform seed");
  v->add_option("--tolerance", verify.tolerance, "max relative discrepancy");
  v->add_option("--out", verify.out, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train_config, train_data, train_out);
    if (e->parsed()) return cmd_eval(eval);
    return cmd_verify(verify);
  } catch (const ToleranceExceeded& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const NonFinite& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
}
