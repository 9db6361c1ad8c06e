// End-to-end tests of the advdet binary. The binary path and the shipped
// schema directory arrive via environment variables set by CMake.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "advdet/checkpoint.hpp"
#include "advdet/evalkit.hpp"
#include "advdet/experiment.hpp"
#include "advdet/image_io.hpp"
#include "advdet/noise_io.hpp"
#include "advdet/util.hpp"

using namespace advdet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_bin() {
  const char* bin = std::getenv("ADVDET_CLI_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

fs::path schema_dir() {
  const char* dir = std::getenv("ADVDET_SCHEMA_DIR");
  REQUIRE(dir != nullptr);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = cli_bin() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const char* sub) const { return (path / sub).string(); }
};

bool same_bytes(const fs::path& a, const fs::path& b) {
  return read_binary_file(a) == read_binary_file(b);
}

}  // namespace

TEST_CASE("synth-fixtures") {
  TempDir tmp("advdet_cli_synth");

  SUBCASE("writes the requested pairs plus manifest and stamps") {
    CHECK(run("synth-fixtures --out " + (tmp / "fx") + " --count 10 --seed 1") == 0);
    CHECK(list_png_files(tmp / "fx").size() == 10);
    CHECK(fs::exists(fs::path(tmp / "fx") / "manifest.json"));
    CHECK(fs::exists(fs::path(tmp / "fx") / "config.json"));
    CHECK(fs::exists(fs::path(tmp / "fx") / "VERSION"));
  }
  SUBCASE("repeat invocation is byte-identical") {
    CHECK(run("synth-fixtures --out " + (tmp / "a") + " --count 5 --seed 9") == 0);
    CHECK(run("synth-fixtures --out " + (tmp / "b") + " --count 5 --seed 9") == 0);
    for (const auto& name : {"fixture_00000.png", "fixture_00003.png", "manifest.json"})
      CHECK(same_bytes(fs::path(tmp / "a") / name, fs::path(tmp / "b") / name));
  }
  SUBCASE("unwritable output exits with code 2") {
    CHECK(run("synth-fixtures --out /proc/advdet_nope --count 1") == 2);
  }
  SUBCASE("bad flags exit with code 2") {
    CHECK(run("synth-fixtures --count 1") == 2);  // missing --out
  }
}

TEST_CASE("perturb") {
  TempDir tmp("advdet_cli_perturb");
  REQUIRE(run("synth-fixtures --out " + (tmp / "fx") + " --count 6 --seed 3") == 0);

  SUBCASE("point mode stays within eps and writes sidecars") {
    CHECK(run("perturb --in " + (tmp / "fx") + " --out " + (tmp / "pt") +
              " --mode point --eps 5 --seed 4") == 0);
    const auto originals = list_png_files(tmp / "fx");
    const auto perturbed = list_png_files(tmp / "pt");
    REQUIRE(perturbed.size() == originals.size());
    for (size_t i = 0; i < originals.size(); ++i) {
      const auto a = load_image(originals[i]);
      const auto b = load_image(perturbed[i]);
      double max_diff = 0.0;
      for (size_t k = 0; k < a.size(); ++k)
        max_diff = std::max(max_diff, std::fabs(a.data()[k] - b.data()[k]));
      // 5/255 plus one PNG quantization step either way
      CHECK(max_diff <= 5.0 / 255.0 + 1.0 / 255.0 + 1e-12);
      CHECK(fs::exists(noise_sidecar_path_for(perturbed[i])));
    }
    // sidecar decodes to a field within the bound
    const auto field = load_noise_sidecar(noise_sidecar_path_for(perturbed[0]));
    CHECK(field.max_abs() <= 5.0 / 255.0 + 1e-9);
  }
  SUBCASE("deterministic outputs") {
    CHECK(run("perturb --in " + (tmp / "fx") + " --out " + (tmp / "p1") +
              " --mode mix --eps 5 --seed 7") == 0);
    CHECK(run("perturb --in " + (tmp / "fx") + " --out " + (tmp / "p2") +
              " --mode mix --eps 5 --seed 7") == 0);
    CHECK(same_bytes(fs::path(tmp / "p1") / "fixture_00002.png",
                     fs::path(tmp / "p2") / "fixture_00002.png"));
    CHECK(same_bytes(fs::path(tmp / "p1") / "manifest.json",
                     fs::path(tmp / "p2") / "manifest.json"));
  }
  SUBCASE("gc on untextured fixtures skips everything and fails") {
    REQUIRE(run("synth-fixtures --out " + (tmp / "flat") +
                " --count 3 --seed 5 --texture-amplitude 0") == 0);
    CHECK(run("perturb --in " + (tmp / "flat") + " --out " + (tmp / "gcflat") +
              " --mode gc --seed 6") == 1);
    const auto manifest = json::parse(read_text_file(fs::path(tmp / "gcflat") / "manifest.json"));
    for (const auto& item : manifest.at("items")) CHECK(item.at("skipped") == true);
  }
  SUBCASE("auto mode draws all four families") {
    REQUIRE(run("synth-fixtures --out " + (tmp / "fx400") + " --count 400 --seed 8") == 0);
    CHECK(run("perturb --in " + (tmp / "fx400") + " --out " + (tmp / "auto") +
              " --mode auto --eps 5 --seed 9") == 0);
    const auto manifest = json::parse(read_text_file(fs::path(tmp / "auto") / "manifest.json"));
    std::map<std::string, int> counts;
    for (const auto& item : manifest.at("items"))
      if (!item.at("skipped").get<bool>()) counts[item.at("mode").get<std::string>()] += 1;
    REQUIRE(counts.size() == 4);
    // uniform over four modes: expect 100 each, 3-sigma band ~ +-26
    for (const auto& [mode, count] : counts) {
      INFO("mode ", mode, " count ", count);
      CHECK(count > 60);
      CHECK(count < 140);
    }
  }
}

TEST_CASE("train and eval") {
  TempDir tmp("advdet_cli_train");
  REQUIRE(run("synth-fixtures --out " + (tmp / "fx") + " --count 64 --side 32 --seed 11") == 0);

  // small config so the test stays fast
  write_text_file(tmp / "cfg.json", R"({
    "version": 1,
    "seed": 21,
    "mode": "auto",
    "detector": {"input_side": 32, "channels": [4, 8, 8, 8], "embedding": 8,
                 "batch_size": 8, "epochs": 2, "seed": 21}
  })");

  SUBCASE("dataset too small is a config error") {
    REQUIRE(run("synth-fixtures --out " + (tmp / "tiny") + " --count 4 --side 32 --seed 1") == 0);
    CHECK(run("train --real " + (tmp / "tiny") + " --config " + (tmp / "cfg.json") +
              " --out " + (tmp / "mtiny")) == 2);
  }

  REQUIRE(run("train --real " + (tmp / "fx") + " --config " + (tmp / "cfg.json") + " --out " +
              (tmp / "model")) == 0);

  SUBCASE("artifacts exist") {
    CHECK(fs::exists(fs::path(tmp / "model") / "checkpoint.json"));
    CHECK(fs::exists(fs::path(tmp / "model") / "curve.json"));
    CHECK(fs::exists(fs::path(tmp / "model") / "config.json"));
    CHECK(fs::exists(fs::path(tmp / "model") / "VERSION"));
  }
  SUBCASE("curve has per-step losses") {
    const auto curve = json::parse(read_text_file(fs::path(tmp / "model") / "curve.json"));
    CHECK(curve.at("steps").size() >= 8);
    for (const auto& s : curve.at("steps")) {
      CHECK(s.contains("cls"));
      CHECK(s.contains("uncertainty"));
    }
  }
  SUBCASE("beta 0 zeroes the uncertainty curve") {
    write_text_file(tmp / "cfg0.json", R"({
      "version": 1,
      "seed": 21,
      "mode": "point",
      "detector": {"input_side": 32, "channels": [4, 8, 8, 8], "embedding": 8,
                   "batch_size": 8, "epochs": 2, "seed": 21},
      "train": {"beta": 0.0}
    })");
    REQUIRE(run("train --real " + (tmp / "fx") + " --config " + (tmp / "cfg0.json") +
                " --out " + (tmp / "model0")) == 0);
    const auto curve = json::parse(read_text_file(fs::path(tmp / "model0") / "curve.json"));
    for (const auto& s : curve.at("steps")) CHECK(s.at("uncertainty").get<double>() == 0.0);
  }
  SUBCASE("retraining is byte-identical") {
    REQUIRE(run("train --real " + (tmp / "fx") + " --config " + (tmp / "cfg.json") +
                " --out " + (tmp / "model2")) == 0);
    CHECK(same_bytes(fs::path(tmp / "model") / "checkpoint.json",
                     fs::path(tmp / "model2") / "checkpoint.json"));
    CHECK(same_bytes(fs::path(tmp / "model") / "curve.json",
                     fs::path(tmp / "model2") / "curve.json"));
  }

  SUBCASE("eval produces a schema-valid report that matches the library oracle") {
    REQUIRE(run("synth-fixtures --out " + (tmp / "test_fx") +
                " --count 16 --side 32 --seed 77") == 0);
    REQUIRE(run("perturb --in " + (tmp / "test_fx") + " --out " + (tmp / "test_adv") +
                " --mode point --eps 5 --seed 78") == 0);
    REQUIRE(run("eval --model " + (tmp / "model") + "/checkpoint.json --real " +
                (tmp / "test_fx") + " --adv " + (tmp / "test_adv") + " --report " +
                (tmp / "report.json")) == 0);

    const auto report = json::parse(read_text_file(tmp / "report.json"));
    const auto schema = json::parse(read_text_file(schema_dir() / "eval_report.schema.json"));
    CHECK_NOTHROW(validate_schema(report, schema));
    CHECK(report.at("n_real") == 16);
    CHECK(report.at("n_adv") == 16);

    // recompute by scoring through the library
    const auto ckpt = load_checkpoint(fs::path(tmp / "model") / "checkpoint.json");
    const auto reals = load_dataset_dir(tmp / "test_fx", false);
    const auto advs = load_dataset_dir(tmp / "test_adv", false);
    auto samples = score_images(ckpt.model, reals.images, kRealClass, "real");
    const auto adv_samples = score_images(ckpt.model, advs.images, kAdvClass, "point");
    samples.insert(samples.end(), adv_samples.begin(), adv_samples.end());
    CHECK(report.at("auc").get<double>() == doctest::Approx(auc(samples)).epsilon(1e-12));
  }
  SUBCASE("evaluating training images warns about the overlap") {
    const std::string err_file = tmp / "overlap_stderr.txt";
    const std::string cmd = cli_bin() + " eval --model " + (tmp / "model") +
                            "/checkpoint.json --real " + (tmp / "fx") + " --adv " +
                            (tmp / "fx") + " --report " + (tmp / "overlap_report.json") +
                            " >/dev/null 2>" + err_file;
    std::system(cmd.c_str());
    CHECK(read_text_file(err_file).find("overlap") != std::string::npos);
  }
  SUBCASE("invalid checkpoint version is rejected") {
    auto j = json::parse(read_text_file(fs::path(tmp / "model") / "checkpoint.json"));
    j["version"] = 42;
    write_text_file(tmp / "bad_ckpt.json", j.dump());
    CHECK(run("eval --model " + (tmp / "bad_ckpt.json") + " --real " + (tmp / "fx") +
              " --adv " + (tmp / "fx") + " --report " + (tmp / "r.json")) == 1);
  }
}

TEST_CASE("cluster") {
  TempDir tmp("advdet_cli_cluster");
  REQUIRE(run("synth-fixtures --out " + (tmp / "fx") + " --count 12 --seed 31") == 0);
  // three separable synthetic families: two patterns at eps 5 plus one
  // strong point family
  REQUIRE(run("perturb --in " + (tmp / "fx") + " --out " + (tmp / "point") +
              " --mode point --eps 5 --seed 32") == 0);
  REQUIRE(run("perturb --in " + (tmp / "fx") + " --out " + (tmp / "block") +
              " --mode block --eps 5 --seed 33") == 0);
  REQUIRE(run("perturb --in " + (tmp / "fx") + " --out " + (tmp / "strong") +
              " --mode point --eps 40 --seed 34") == 0);
  const std::string dirs =
      (tmp / "point") + "," + (tmp / "block") + "," + (tmp / "strong");

  SUBCASE("three families separate at K=3") {
    CHECK(run("cluster --noise-dirs " + dirs + " --k 3 --report " + (tmp / "c.json") +
              " --seed 5") == 0);
    const auto report = json::parse(read_text_file(tmp / "c.json"));
    const auto schema = json::parse(read_text_file(schema_dir() / "cluster_report.schema.json"));
    CHECK_NOTHROW(validate_schema(report, schema));
    CHECK(report.at("purity").get<double>() >= 0.95);
    const auto trace = report.at("inertia_trace").get<std::vector<double>>();
    for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-9);
  }
  SUBCASE("K=1 composition is the global mix") {
    CHECK(run("cluster --noise-dirs " + dirs + " --k 1 --report " + (tmp / "c1.json")) == 0);
    const auto report = json::parse(read_text_file(tmp / "c1.json"));
    CHECK(report.at("clusters").size() == 1);
    const auto comp = report.at("clusters")[0].at("composition");
    CHECK(comp.at("point").get<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(comp.at("block").get<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  }
  SUBCASE("deterministic report bytes") {
    CHECK(run("cluster --noise-dirs " + dirs + " --k 3 --report " + (tmp / "d1.json") +
              " --seed 6") == 0);
    CHECK(run("cluster --noise-dirs " + dirs + " --k 3 --report " + (tmp / "d2.json") +
              " --seed 6") == 0);
    CHECK(same_bytes(tmp / "d1.json", tmp / "d2.json"));
  }
  SUBCASE("too few samples is an error") {
    CHECK(run("cluster --noise-dirs " + dirs + " --k 999 --report " + (tmp / "e.json")) == 1);
  }
}

TEST_CASE("cross (reduced scale)") {
  TempDir tmp("advdet_cli_cross");
  write_text_file(tmp / "cfg.json", R"({
    "version": 1,
    "mode": "auto",
    "detector": {"input_side": 32, "channels": [4, 8, 8, 8], "embedding": 8,
                 "batch_size": 8, "epochs": 2}
  })");
  CHECK(run("cross --workdir " + (tmp / "w") + " --modes point,block --eps-list \"\" "
            "--seed 41 --count 48 --test-count 16 --side 32 --config " +
            (tmp / "cfg.json")) == 0);

  const fs::path reports = fs::path(tmp / "w") / "reports";
  CHECK(fs::exists(reports / "cross_modes.json"));
  CHECK(fs::exists(reports / "cross_modes.csv"));
  CHECK(fs::exists(reports / "cross_modes.txt"));
  CHECK(fs::exists(fs::path(tmp / "w") / "models" / "point" / "checkpoint.json"));

  const auto report = json::parse(read_text_file(reports / "cross_modes.json"));
  const auto schema = json::parse(read_text_file(schema_dir() / "matrix_report.schema.json"));
  CHECK_NOTHROW(validate_schema(report, schema));
  CHECK(report.at("auc").size() == 2);
  CHECK(report.at("auc")[0].size() == 2);
}
