#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>

#include "gem/dataset.hpp"
#include "gem/nn.hpp"

using namespace gem;
using nlohmann::json;

namespace {

std::filesystem::path work_root() {
  static const std::filesystem::path root = [] {
    auto dir = std::filesystem::temp_directory_path() / "gem_cli";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
  }();
  return root;
}

int run(const std::string& args) {
  const std::string cmd = std::string(GEMMESH_BIN) + " " + args +
                          " > " + (work_root() / "cmd.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json slurp_json(const std::filesystem::path& p) {
  return json::parse(slurp(p));
}

// Small irregular single-artery dataset shared by the train/eval cases.
std::filesystem::path shared_dataset() {
  static const std::filesystem::path dir = [] {
    const auto d = work_root() / "ds";
    REQUIRE(run("synth --kind single --count 8 --seed 100 --out " +
                d.string() + " --segments 13 --spacing 0.8 --jobs 2") == 0);
    return d;
  }();
  return dir;
}

std::filesystem::path write_config(const std::string& name,
                                   const std::string& body) {
  const auto path = work_root() / name;
  std::ofstream(path) << body;
  return path;
}

std::string gem_config(double lr, int epochs) {
  return "{ \"version\": 1,\n"
         "  \"model\": {\"conv_kind\": \"gem\", \"levels\": 2, "
         "\"widths\": [2, 3], \"blocks\": 1, \"seed\": 3, "
         "\"nonlin_samples\": 32},\n"
         "  \"train\": {\"epochs\": " + std::to_string(epochs) +
         ", \"batch_size\": 4, \"lr\": " + std::to_string(lr) +
         ", \"seed\": 1},\n"
         "  \"geometry\": {\"ratios\": [1.0, 0.35], "
         "\"radius_factors\": [1.0, 3.0]} }";
}

// Trained gem checkpoint shared by the eval/verify cases.
std::filesystem::path gem_run() {
  static const std::filesystem::path dir = [] {
    const auto cfg = write_config("gem.json", gem_config(1e-3, 2));
    const auto d = work_root() / "gem_run";
    REQUIRE(run("train --config " + cfg.string() + " --data " +
                shared_dataset().string() + " --out " + d.string()) == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("synth is deterministic and respects the flow range") {
  const auto a = work_root() / "synth_a";
  const auto b = work_root() / "synth_b";
  const std::string flags =
      " --kind single --count 2 --seed 7 --segments 13 --spacing 0.8"
      " --flow-range 2.0,2.5 --out ";
  REQUIRE(run("synth" + flags + a.string()) == 0);
  REQUIRE(run("synth" + flags + b.string() + " --jobs 2") == 0);
  for (const char* name :
       {"sample_0000.obj", "sample_0000.json", "sample_0000.csv",
        "sample_0001.csv", "stats.json"})
    CHECK(file_hash(a / name) == file_hash(b / name));
  for (const auto& stem : list_samples(a)) {
    const LabeledSample ls = read_sample(stem);
    CHECK(ls.spec.flow >= 2.0);
    CHECK(ls.spec.flow <= 2.5);
  }
  // the manifest covers every artifact it sits next to
  const json manifest = slurp_json(a / "manifest.json");
  CHECK(manifest["outputs"].size() == 7);
  CHECK(manifest["seed"] == 7);
}

TEST_CASE("bifurcating synth output satisfies the diameter law") {
  const auto d = work_root() / "synth_bif";
  REQUIRE(run("synth --kind bifurcating --count 5 --seed 11 --out " +
              d.string() + " --segments 13 --spacing 0.8 --jobs 2") == 0);
  const auto stems = list_samples(d);
  REQUIRE(stems.size() == 5);
  for (const auto& stem : stems) {
    const ArterySpec spec = read_sample(stem).spec;
    const double eps = bifurcation_residual(0.2 * spec.r_pmv, 0.2 * spec.r_dmv,
                                            0.2 * spec.r_sb);
    CHECK(std::abs(eps) <= 0.165);
    CHECK(eps == doctest::Approx(spec.eps_law).epsilon(1e-12));
  }
  const json stats = slurp_json(d / "stats.json");
  CHECK(stats["count"] == 5);
  CHECK(stats["mean_beta"].get<double>() > 0.0);
}

TEST_CASE("GEMMESH_SEED overrides the seed flag") {
  const auto d = work_root() / "synth_env";
  const auto ref = work_root() / "synth_env_ref";
  REQUIRE(run("synth --kind single --count 1 --seed 200 --out " + ref.string() +
              " --segments 13 --spacing 0.8") == 0);
  setenv("GEMMESH_SEED", "200", 1);
  const int code = run("synth --kind single --count 1 --seed 7 --out " +
                       d.string() + " --segments 13 --spacing 0.8");
  unsetenv("GEMMESH_SEED");
  REQUIRE(code == 0);
  CHECK(file_hash(d / "sample_0000.obj") ==
        file_hash(ref / "sample_0000.obj"));
  CHECK(slurp_json(d / "manifest.json")["seed"] == 200);
}

TEST_CASE("config files with unknown keys or bad version are rejected") {
  const auto bad = write_config(
      "bad.json", "{ \"version\": 1, \"model\": {\"levles\": 2} }");
  CHECK(run("train --config " + bad.string() + " --data " +
            shared_dataset().string() + " --out " +
            (work_root() / "bad_out").string()) == 1);
  const auto old = write_config("old.json", "{ \"version\": 2 }");
  CHECK(run("train --config " + old.string() + " --data " +
            shared_dataset().string() + " --out " +
            (work_root() / "bad_out").string()) == 1);
}

TEST_CASE("training with lr zero is a no-op on the weights") {
  const auto cfg = write_config("lr0.json", gem_config(0.0, 1));
  const auto out = work_root() / "lr0_run";
  REQUIRE(run("train --config " + cfg.string() + " --data " +
              shared_dataset().string() + " --out " + out.string()) == 0);
  const nn::Checkpoint ckpt =
      nn::load_checkpoint((out / "model.ckpt").string());
  nn::Model fresh(nn::ModelConfig::from_json(ckpt.config_json));
  const auto params = fresh.parameters();
  REQUIRE(params.size() == ckpt.values.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK((*params[i].value - ckpt.values[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identical train invocations produce identical history") {
  const auto cfg = write_config("det.json", gem_config(1e-3, 2));
  const auto a = work_root() / "det_a";
  const auto b = work_root() / "det_b";
  for (const auto& out : {a, b})
    REQUIRE(run("train --config " + cfg.string() + " --data " +
                shared_dataset().string() + " --out " + out.string()) == 0);
  CHECK(file_hash(a / "history.csv") == file_hash(b / "history.csv"));
  CHECK(file_hash(a / "model.ckpt") == file_hash(b / "model.ckpt"));
  const json summary = slurp_json(a / "train_summary.json");
  CHECK(summary["split"]["train"].size() +
            summary["split"]["val"].size() +
            summary["split"]["test"].size() ==
        8);
  CHECK(summary["split"]["train"].size() == 6);
}

TEST_CASE("gem eval is insensitive to random test rotations") {
  const auto cfg = work_root() / "gem.json";
  const auto none = work_root() / "eval_none";
  const auto rot = work_root() / "eval_rot";
  REQUIRE(run("eval --checkpoint " + (gem_run() / "model.ckpt").string() +
              " --data " + shared_dataset().string() + " --config " +
              cfg.string() + " --rotate none --out " + none.string() +
              " --jobs 2 --vtk") == 0);
  REQUIRE(run("eval --checkpoint " + (gem_run() / "model.ckpt").string() +
              " --data " + shared_dataset().string() + " --config " +
              cfg.string() + " --rotate random --seed 5 --out " +
              rot.string()) == 0);
  const double n0 = slurp_json(none / "metrics.json")["nmae"]["mean"];
  const double n1 = slurp_json(rot / "metrics.json")["nmae"]["mean"];
  CHECK(std::abs(n0 - n1) < 1e-3);
  CHECK(slurp(none / "metrics.csv").rfind("metric,mean,median,p75", 0) == 0);
  CHECK(std::filesystem::exists(none / "sample_0000_pred.vtk"));
}

TEST_CASE("verify exit codes separate equivariant and baseline models") {
  const auto cfg = work_root() / "gem.json";
  const auto mesh = shared_dataset() / "sample_0000.obj";
  CHECK(run("verify --checkpoint " + (gem_run() / "model.ckpt").string() +
            " --mesh " + mesh.string() + " --config " + cfg.string() +
            " --suite se3 --out " + (work_root() / "vr").string()) == 0);
  CHECK(run("verify --checkpoint " + (gem_run() / "model.ckpt").string() +
            " --mesh " + mesh.string() + " --config " + cfg.string() +
            " --suite gauge") == 0);
  const json report = slurp_json(work_root() / "vr" / "report.json");
  CHECK(report["passed"] == true);
  CHECK(report["max_rel"].get<double>() < 5e-3);

  const auto pcfg = write_config(
      "pointnet.json",
      "{ \"version\": 1,\n"
      "  \"model\": {\"conv_kind\": \"pointnet\", \"levels\": 2, "
      "\"widths\": [6, 8], \"blocks\": 1, \"seed\": 3},\n"
      "  \"train\": {\"epochs\": 1, \"batch_size\": 4, \"lr\": 0.001, "
      "\"seed\": 1},\n"
      "  \"geometry\": {\"ratios\": [1.0, 0.35], "
      "\"radius_factors\": [1.0, 3.0]} }");
  const auto prun = work_root() / "pointnet_run";
  REQUIRE(run("train --config " + pcfg.string() + " --data " +
              shared_dataset().string() + " --out " + prun.string()) == 0);
  CHECK(run("verify --checkpoint " + (prun / "model.ckpt").string() +
            " --mesh " + mesh.string() + " --config " + pcfg.string() +
            " --suite se3") == 2);
  CHECK(run("verify --checkpoint " + (gem_run() / "model.ckpt").string() +
            " --mesh " + mesh.string() + " --suite nosuch") == 1);
}

TEST_CASE("verify rf reports the multiscale reach ratio") {
  const auto cfg = work_root() / "gem.json";
  const auto out = work_root() / "rf";
  REQUIRE(run("verify --checkpoint " + (gem_run() / "model.ckpt").string() +
              " --mesh " + (shared_dataset() / "sample_0000.obj").string() +
              " --config " + cfg.string() + " --suite rf --out " +
              out.string()) == 0);
  const json report = slurp_json(out / "report.json");
  CHECK(report["reach_ratio"].get<double>() > 1.0);
  CHECK(report["span_full"].get<double>() >
        report["span_shallow"].get<double>());
}
