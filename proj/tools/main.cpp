#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "advdet/checkpoint.hpp"
#include "advdet/error.hpp"
#include "advdet/evalkit.hpp"
#include "advdet/experiment.hpp"
#include "advdet/fixtures.hpp"
#include "advdet/image_io.hpp"
#include "advdet/landmarks.hpp"
#include "advdet/noise_io.hpp"
#include "advdet/util.hpp"
#include "advdet/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Every output directory gets the effective config and a version stamp.
void write_run_stamp(const fs::path& dir, const json& effective_config) {
  advdet::write_text_file(dir / "config.json", effective_config.dump(2) + "\n");
  advdet::write_text_file(dir / "VERSION", std::string(advdet::kToolVersion) + "\n");
}

void require_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw advdet::ConfigError("output directory not usable: " + dir.string());
  const fs::path probe = dir / ".advdet_write_probe";
  try {
    advdet::write_text_file(probe, "");
  } catch (const advdet::IoError&) {
    throw advdet::ConfigError("output directory not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int cmd_synth_fixtures(const std::string& out, int count, int side, uint64_t seed,
                       double texture_amplitude) {
  require_writable_dir(out);
  advdet::FixtureSpec spec;
  spec.side = side;
  spec.seed = seed;
  spec.texture_amplitude = texture_amplitude;
  spec.validate();

  const auto manifest = advdet::gen_dataset(count, spec, out);

  json cfg;
  cfg["command"] = "synth-fixtures";
  cfg["count"] = count;
  cfg["side"] = side;
  cfg["seed"] = seed;
  cfg["texture_amplitude"] = texture_amplitude;
  write_run_stamp(out, cfg);

  std::cout << "wrote " << manifest.items.size() << " fixture pairs to " << out << "\n";
  return 0;
}

int cmd_perturb(const std::string& in, const std::string& out, const std::string& mode_str,
                double eps, uint64_t seed, const std::string& landmark_dir) {
  const advdet::PerturbKind kind = advdet::perturb_kind_from_string(mode_str);
  require_writable_dir(out);

  std::vector<fs::path> image_paths;
  const fs::path manifest_path = fs::path(in) / "manifest.json";
  if (fs::exists(manifest_path)) {
    for (const auto& item : advdet::load_manifest(manifest_path).items)
      image_paths.push_back(fs::path(in) / item.image);
  } else {
    image_paths = advdet::list_png_files(in);
  }
  if (image_paths.empty()) throw advdet::IoError("no PNG images found in " + in);

  advdet::GradientPerturbConfig grad_cfg;
  grad_cfg.eps = eps;
  grad_cfg.validate();
  advdet::GanPerturbConfig gan_cfg;
  gan_cfg.validate();
  const bool needs_landmarks =
      kind == advdet::PerturbKind::kGc || kind == advdet::PerturbKind::kAuto;

  struct ItemResult {
    advdet::PerturbedImage perturbed;
    bool skipped = false;
    std::string reason;
  };

  json items = json::array();
  size_t n_written = 0, n_skipped = 0;

  // Chunked so large datasets never sit fully in memory.
  const size_t chunk = 64;
  for (size_t base = 0; base < image_paths.size(); base += chunk) {
    const size_t n = std::min(chunk, image_paths.size() - base);
    std::vector<ItemResult> results(n);
    advdet::parallel_for(n, [&](size_t k) {
      const size_t index = base + k;
      const fs::path& path = image_paths[index];
      ItemResult& r = results[k];
      try {
        const advdet::ImageTensor img = advdet::load_image(path);
        advdet::LandmarkSet lm;
        if (needs_landmarks) {
          const fs::path lm_base =
              landmark_dir.empty() ? path : fs::path(landmark_dir) / path.filename();
          const fs::path lm_path = advdet::landmarks_path_for(lm_base);
          if (!fs::exists(lm_path)) {
            if (kind == advdet::PerturbKind::kGc) {
              r.skipped = true;
              r.reason = "missing landmarks: " + lm_path.string();
              return;
            }
          } else {
            lm = advdet::load_landmarks(lm_path);
          }
        }
        advdet::Rng rng(advdet::derive_seed(seed, index));
        if (kind == advdet::PerturbKind::kAuto && lm.points.empty()) {
          // Without landmarks, auto can only draw the gradient families.
          const auto sub = static_cast<advdet::PerturbKind>(rng.uniform_int(0, 2));
          r.perturbed = advdet::perturb_one(img, lm, sub, grad_cfg, gan_cfg, rng);
        } else {
          r.perturbed = advdet::perturb_one(img, lm, kind, grad_cfg, gan_cfg, rng);
        }
      } catch (const advdet::DegenerateInputError& e) {
        r.skipped = true;
        r.reason = e.what();
      }
    });

    for (size_t k = 0; k < n; ++k) {
      const size_t index = base + k;
      const fs::path& src = image_paths[index];
      json item;
      item["image"] = src.filename().string();
      item["seed"] = advdet::derive_seed(seed, index);
      if (results[k].skipped) {
        item["skipped"] = true;
        item["reason"] = results[k].reason;
        std::cerr << "skip " << src.filename().string() << ": " << results[k].reason << "\n";
        ++n_skipped;
      } else {
        const auto& p = results[k].perturbed;
        const fs::path out_img = fs::path(out) / src.filename();
        advdet::save_image(p.image, out_img);
        advdet::save_noise_sidecar(p.noise, p.eps,
                                   advdet::noise_sidecar_path_for(out_img),
                                   src.filename().string());
        item["skipped"] = false;
        item["mode"] = p.mode;
        item["eps"] = p.eps;
        ++n_written;
      }
      items.push_back(std::move(item));
    }
  }

  json manifest;
  manifest["version"] = advdet::kManifestVersion;
  manifest["base_seed"] = seed;
  manifest["items"] = std::move(items);
  advdet::write_text_file(fs::path(out) / "manifest.json", manifest.dump(2) + "\n");

  json cfg;
  cfg["command"] = "perturb";
  cfg["in"] = in;
  cfg["mode"] = mode_str;
  cfg["eps"] = eps;
  cfg["seed"] = seed;
  write_run_stamp(out, cfg);

  std::cout << "perturbed " << n_written << " images, skipped " << n_skipped << "\n";
  if (n_written == 0) throw advdet::Error("all images were skipped");
  return 0;
}

int cmd_train(const std::string& real_dir, const std::string& config_path,
              const std::string& out_dir) {
  advdet::RunConfig cfg =
      config_path.empty() ? advdet::RunConfig{} : advdet::load_run_config(config_path);
  require_writable_dir(out_dir);

  const bool needs_landmarks = cfg.train_mode == advdet::PerturbKind::kGc ||
                               cfg.train_mode == advdet::PerturbKind::kAuto;
  const auto ds = advdet::load_dataset_dir(real_dir, needs_landmarks);
  std::vector<advdet::LandmarkSet> landmarks = ds.landmarks;
  if (landmarks.empty()) landmarks.resize(ds.images.size());

  const auto result = advdet::train_detector(ds.images, landmarks, cfg);

  advdet::Checkpoint ckpt;
  ckpt.model = result.model;
  ckpt.gaussian = result.gaussian;
  for (const auto& path : ds.image_paths)
    ckpt.training_image_fnv.push_back(advdet::to_hex(advdet::fnv1a64_file(path)));
  std::sort(ckpt.training_image_fnv.begin(), ckpt.training_image_fnv.end());

  advdet::save_checkpoint(ckpt, fs::path(out_dir) / "checkpoint.json");
  advdet::write_text_file(fs::path(out_dir) / "curve.json", result.curve.dump(2) + "\n");
  write_run_stamp(out_dir, advdet::run_config_to_json(cfg));

  std::cout << "trained on " << ds.images.size() << " reals; checkpoint in " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& real_dir,
             const std::string& adv_dir, const std::string& report_path) {
  const advdet::Checkpoint ckpt = advdet::load_checkpoint(model_path);

  const auto reals = advdet::load_dataset_dir(real_dir, false);
  const auto advs = advdet::load_dataset_dir(adv_dir, false);

  // Per-image source tags from the adversarial manifest when present.
  std::map<std::string, std::string> tag_by_name;
  const fs::path adv_manifest = fs::path(adv_dir) / "manifest.json";
  if (fs::exists(adv_manifest)) {
    const json m = json::parse(advdet::read_text_file(adv_manifest));
    if (m.contains("items")) {
      for (const auto& item : m.at("items")) {
        if (item.contains("mode"))
          tag_by_name[item.value("image", "")] = item.at("mode").get<std::string>();
      }
    }
  }
  const std::string fallback_tag = fs::path(adv_dir).filename().string();

  // Train/eval overlap warning via recorded checksums.
  if (!ckpt.training_image_fnv.empty()) {
    size_t overlap = 0;
    auto count_overlap = [&](const std::vector<fs::path>& paths) {
      for (const auto& p : paths) {
        const std::string h = advdet::to_hex(advdet::fnv1a64_file(p));
        if (std::binary_search(ckpt.training_image_fnv.begin(),
                               ckpt.training_image_fnv.end(), h))
          ++overlap;
      }
    };
    count_overlap(reals.image_paths);
    count_overlap(advs.image_paths);
    if (overlap > 0)
      std::cerr << "warning: " << overlap
                << " evaluation image(s) overlap the training set (checksum match)\n";
  }

  std::vector<advdet::ScoredSample> samples =
      advdet::score_images(ckpt.model, reals.images, advdet::kRealClass, "real");
  std::vector<advdet::ScoredSample> adv_scored(advs.images.size());
  advdet::parallel_for(advs.images.size(), [&](size_t i) {
    const std::string name = advs.image_paths[i].filename().string();
    const auto it = tag_by_name.find(name);
    adv_scored[i] = {advdet::adv_score(ckpt.model, advs.images[i]), advdet::kAdvClass,
                     it != tag_by_name.end() ? it->second : fallback_tag};
  });
  samples.insert(samples.end(), adv_scored.begin(), adv_scored.end());

  json report = advdet::make_eval_report(samples);
  report["model"] = model_path;
  report["config"] = advdet::detector_config_to_json(ckpt.model.cfg);
  advdet::write_text_file(report_path, report.dump(2) + "\n");

  std::cout << "auc=" << report["auc"].get<double>()
            << " accuracy@0.5=" << report["accuracy_at_0.5"].get<double>() << " (n_real="
            << reals.images.size() << ", n_adv=" << advs.images.size() << ")\n";
  return 0;
}

int cmd_cluster(const std::string& dirs_csv, int k, const std::string& report_path,
                uint64_t seed, int downsample_side) {
  std::vector<advdet::PerturbationField> fields;
  std::vector<std::string> tags;
  for (const auto& dir : split_csv(dirs_csv)) {
    const std::string tag = fs::path(dir).filename().string();
    std::vector<fs::path> raws;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".raw")
        raws.push_back(entry.path());
    }
    std::sort(raws.begin(), raws.end());
    for (const auto& raw : raws) {
      fields.push_back(advdet::load_noise_sidecar(raw));
      tags.push_back(tag);
    }
  }
  if (fields.size() < static_cast<size_t>(k))
    throw advdet::InsufficientDataError("fewer noise sidecars than clusters");

  advdet::Rng rng(seed);
  const auto report = advdet::kmeans_noise(fields, tags, k, downsample_side, rng);

  json j = advdet::cluster_report_to_json(report);
  j["tool_version"] = advdet::kToolVersion;
  j["seed"] = seed;
  j["downsample_side"] = downsample_side;
  advdet::write_text_file(report_path, j.dump(2) + "\n");

  std::cout << "k=" << k << " purity=" << advdet::cluster_purity(report)
            << " iterations=" << report.iterations << "\n";
  return 0;
}

int cmd_cross(const std::string& workdir, const std::string& modes_csv,
              const std::string& eps_csv, uint64_t seed, int train_count, int test_count,
              int side, const std::string& config_path) {
  require_writable_dir(workdir);
  const fs::path reports_dir = fs::path(workdir) / "reports";
  const fs::path models_dir = fs::path(workdir) / "models";
  require_writable_dir(reports_dir);
  require_writable_dir(models_dir);

  advdet::RunConfig base =
      config_path.empty() ? advdet::RunConfig{} : advdet::load_run_config(config_path);
  base.seed = seed;
  base.detector.input_side = side;
  base.detector.seed = seed;
  base.validate();

  advdet::FixtureSpec spec;
  spec.side = side;

  spec.seed = advdet::derive_seed(seed, 0x545249ULL);  // train pool
  const auto train_pool = advdet::make_fixture_pool(train_count, spec);
  spec.seed = advdet::derive_seed(seed, 0x544553ULL);  // test pool
  const auto test_pool = advdet::make_fixture_pool(test_count, spec);

  auto train_for = [&](advdet::PerturbKind kind, double grad_eps,
                       uint64_t model_tag) -> advdet::TrainResult {
    advdet::RunConfig cfg = base;
    cfg.train_mode = kind;
    cfg.gradient.eps = grad_eps;
    cfg.seed = advdet::derive_seed(seed, model_tag);
    cfg.detector.seed = cfg.seed;
    return advdet::train_detector(train_pool.images, train_pool.landmarks, cfg);
  };

  auto score_row = [&](const advdet::DetectorModel& model,
                       const std::vector<std::vector<advdet::ImageTensor>>& test_sets,
                       const std::vector<std::string>& tags) {
    std::vector<std::vector<advdet::ScoredSample>> rows;
    const auto real_scores =
        advdet::score_images(model, test_pool.images, advdet::kRealClass, "real");
    for (size_t t = 0; t < test_sets.size(); ++t) {
      auto cell = real_scores;
      const auto adv = advdet::score_images(model, test_sets[t], advdet::kAdvClass, tags[t]);
      cell.insert(cell.end(), adv.begin(), adv.end());
      rows.push_back(std::move(cell));
    }
    return rows;
  };

  // Mode-cross matrix.
  const std::vector<std::string> modes = split_csv(modes_csv);
  if (!modes.empty()) {
    std::vector<std::vector<advdet::ImageTensor>> test_sets;
    for (size_t t = 0; t < modes.size(); ++t) {
      test_sets.push_back(advdet::perturb_pool(
          test_pool, advdet::perturb_kind_from_string(modes[t]), base.gradient, base.gan,
          advdet::derive_seed(seed, 0x74657374ULL, t)));
    }
    std::map<std::string, advdet::TrainResult> trained;
    for (size_t m = 0; m < modes.size(); ++m) {
      std::cout << "training mode=" << modes[m] << "...\n";
      trained.emplace(modes[m], train_for(advdet::perturb_kind_from_string(modes[m]),
                                          base.gradient.eps, 0x6d6f64ULL * 131 + m));
      const fs::path model_dir = models_dir / modes[m];
      require_writable_dir(model_dir);
      advdet::Checkpoint ckpt;
      ckpt.model = trained.at(modes[m]).model;
      ckpt.gaussian = trained.at(modes[m]).gaussian;
      advdet::save_checkpoint(ckpt, model_dir / "checkpoint.json");
      advdet::write_text_file(model_dir / "curve.json",
                              trained.at(modes[m]).curve.dump(2) + "\n");
    }
    const auto matrix = advdet::cross_matrix(modes, modes, [&](const std::string& tag) {
      return score_row(trained.at(tag).model, test_sets, modes);
    });
    advdet::write_text_file(reports_dir / "cross_modes.json",
                            advdet::matrix_to_json(matrix, "mode_cross").dump(2) + "\n");
    advdet::write_text_file(reports_dir / "cross_modes.csv", advdet::matrix_to_csv(matrix));
    advdet::write_text_file(reports_dir / "cross_modes.txt",
                            advdet::matrix_to_text(matrix, "AUC by train mode x test mode"));
    std::cout << advdet::matrix_to_text(matrix, "AUC by train mode x test mode");
  }

  // Epsilon-cross matrix (point-wise family).
  std::vector<double> eps_list;
  for (const auto& tok : split_csv(eps_csv)) eps_list.push_back(std::stod(tok));
  if (!eps_list.empty()) {
    std::vector<std::vector<advdet::ImageTensor>> test_sets;
    std::vector<std::string> tags;
    for (size_t t = 0; t < eps_list.size(); ++t) {
      advdet::GradientPerturbConfig grad = base.gradient;
      grad.eps = eps_list[t];
      test_sets.push_back(advdet::perturb_pool(test_pool, advdet::PerturbKind::kPoint, grad,
                                               base.gan,
                                               advdet::derive_seed(seed, 0x65707374ULL, t)));
      tags.push_back(advdet::format_eps_tag(eps_list[t]));
    }
    std::map<std::string, advdet::TrainResult> trained;
    for (size_t m = 0; m < eps_list.size(); ++m) {
      std::cout << "training eps=" << eps_list[m] << "...\n";
      trained.emplace(tags[m], train_for(advdet::PerturbKind::kPoint, eps_list[m],
                                         0x657073ULL * 131 + m));
    }
    const auto matrix = advdet::eps_cross(eps_list, eps_list, [&](const std::string& tag) {
      return score_row(trained.at(tag).model, test_sets, tags);
    });
    advdet::write_text_file(reports_dir / "eps_cross.json",
                            advdet::matrix_to_json(matrix, "eps_cross").dump(2) + "\n");
    advdet::write_text_file(reports_dir / "eps_cross.csv", advdet::matrix_to_csv(matrix));
    advdet::write_text_file(reports_dir / "eps_cross.txt",
                            advdet::matrix_to_text(matrix, "AUC by train eps x test eps"));
    std::cout << advdet::matrix_to_text(matrix, "AUC by train eps x test eps");
  }

  json cfg = advdet::run_config_to_json(base);
  cfg["command"] = "cross";
  cfg["modes"] = modes_csv;
  cfg["eps_list"] = eps_csv;
  cfg["train_count"] = train_count;
  cfg["test_count"] = test_count;
  write_run_stamp(workdir, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-perturbation based adversarial face detection toolkit"};
  app.set_version_flag("--version", advdet::kToolVersion);
  app.require_subcommand(1);

  // synth-fixtures
  auto* synth = app.add_subcommand("synth-fixtures", "Generate synthetic face fixtures");
  std::string synth_out;
  int synth_count = 10, synth_side = 64;
  uint64_t synth_seed = 0;
  double synth_amp = 0.25;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of fixtures");
  synth->add_option("--side", synth_side, "Image side (multiple of 16)");
  synth->add_option("--seed", synth_seed, "Base seed");
  synth->add_option("--texture-amplitude", synth_amp, "Region texture amplitude");

  // perturb
  auto* perturb = app.add_subcommand("perturb", "Self-perturb a directory of images");
  std::string pert_in, pert_out, pert_mode = "auto", pert_lm;
  double pert_eps = 5.0;
  uint64_t pert_seed = 0;
  perturb->add_option("--in", pert_in, "Input image directory")->required();
  perturb->add_option("--out", pert_out, "Output directory")->required();
  perturb->add_option("--mode", pert_mode, "point|block|mix|gc|auto");
  perturb->add_option("--eps", pert_eps, "Gradient-family magnitude (1/255 units)");
  perturb->add_option("--seed", pert_seed, "Base seed");
  perturb->add_option("--landmarks", pert_lm, "Landmark directory (default: input dir)");

  // train
  auto* train = app.add_subcommand("train", "Train a detector on real images");
  std::string train_real, train_config, train_out;
  train->add_option("--real", train_real, "Directory of real images")->required();
  train->add_option("--config", train_config, "Run config JSON");
  train->add_option("--out", train_out, "Model output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_model, eval_real, eval_adv, eval_report;
  eval->add_option("--model", eval_model, "Checkpoint file")->required();
  eval->add_option("--real", eval_real, "Real image directory")->required();
  eval->add_option("--adv", eval_adv, "Adversarial image directory")->required();
  eval->add_option("--report", eval_report, "Report JSON path")->required();

  // cluster
  auto* cluster = app.add_subcommand("cluster", "K-means over noise sidecars");
  std::string clus_dirs, clus_report;
  int clus_k = 3, clus_side = 32;
  uint64_t clus_seed = 0;
  cluster->add_option("--noise-dirs", clus_dirs, "Comma-separated sidecar dirs")->required();
  cluster->add_option("--k", clus_k, "Cluster count")->required();
  cluster->add_option("--report", clus_report, "Report JSON path")->required();
  cluster->add_option("--seed", clus_seed, "Seed");
  cluster->add_option("--downsample-side", clus_side, "Noise downsample side");

  // cross
  auto* cross = app.add_subcommand("cross", "Cross-generator and cross-eps experiments");
  std::string cross_workdir, cross_modes = "point,block,mix,gc", cross_eps = "5,10";
  std::string cross_config;
  uint64_t cross_seed = 0;
  int cross_count = 400, cross_test = 100, cross_side = 64;
  cross->add_option("--workdir", cross_workdir, "Working directory")->required();
  cross->add_option("--modes", cross_modes, "Comma-separated train/test modes");
  cross->add_option("--eps-list", cross_eps, "Comma-separated eps sweep");
  cross->add_option("--seed", cross_seed, "Seed");
  cross->add_option("--count", cross_count, "Training fixture count");
  cross->add_option("--test-count", cross_test, "Held-out fixture count");
  cross->add_option("--side", cross_side, "Fixture side");
  cross->add_option("--config", cross_config, "Base run config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed())
      return cmd_synth_fixtures(synth_out, synth_count, synth_side, synth_seed, synth_amp);
    if (perturb->parsed())
      return cmd_perturb(pert_in, pert_out, pert_mode, pert_eps, pert_seed, pert_lm);
    if (train->parsed()) return cmd_train(train_real, train_config, train_out);
    if (eval->parsed()) return cmd_eval(eval_model, eval_real, eval_adv, eval_report);
    if (cluster->parsed())
      return cmd_cluster(clus_dirs, clus_k, clus_report, clus_seed, clus_side);
    if (cross->parsed())
      return cmd_cross(cross_workdir, cross_modes, cross_eps, cross_seed, cross_count,
                       cross_test, cross_side, cross_config);
  } catch (const advdet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
