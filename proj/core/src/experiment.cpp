#include "advdet/experiment.hpp"

#include <algorithm>
#include <numeric>

#include "advdet/error.hpp"
#include "advdet/image_io.hpp"
#include "advdet/util.hpp"
#include "advdet/version.hpp"

namespace advdet {

const char* to_string(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::kPoint: return "point";
    case PerturbKind::kBlock: return "block";
    case PerturbKind::kMix: return "mix";
    case PerturbKind::kGc: return "gc";
    case PerturbKind::kAuto: return "auto";
  }
  return "?";
}

PerturbKind perturb_kind_from_string(const std::string& s) {
  if (s == "point") return PerturbKind::kPoint;
  if (s == "block") return PerturbKind::kBlock;
  if (s == "mix") return PerturbKind::kMix;
  if (s == "gc") return PerturbKind::kGc;
  if (s == "auto") return PerturbKind::kAuto;
  throw ConfigError("unknown perturbation mode: " + s);
}

void RunConfig::validate() const {
  detector.validate();
  gradient.validate();
  gan.validate();
  train.validate();
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["version"] = kConfigVersion;
  j["seed"] = cfg.seed;
  j["mode"] = to_string(cfg.train_mode);
  j["detector"] = detector_config_to_json(cfg.detector);

  nlohmann::json grad;
  grad["eps"] = cfg.gradient.eps;
  if (cfg.gradient.mode) grad["pattern"] = to_string(*cfg.gradient.mode);
  grad["block_side_min"] = cfg.gradient.block_side_min;
  grad["block_side_max"] = cfg.gradient.block_side_max;
  grad["block_anchor_density"] = cfg.gradient.block_anchor_density;
  j["gradient"] = grad;

  nlohmann::json gan;
  gan["eps_min"] = cfg.gan.eps_min;
  gan["eps_max"] = cfg.gan.eps_max;
  gan["gamma"] = cfg.gan.gamma;
  gan["subset_prob_min"] = cfg.gan.subset_prob_min;
  gan["subset_prob_max"] = cfg.gan.subset_prob_max;
  gan["patch_side_min"] = cfg.gan.patch_side_min;
  gan["patch_side_max"] = cfg.gan.patch_side_max;
  gan["dominant_patch_prob"] = cfg.gan.dominant_patch_prob;
  j["gan"] = gan;

  nlohmann::json train;
  train["beta"] = cfg.train.beta;
  train["ood_num_candidates"] = cfg.train.ood.num_candidates;
  train["ood_keep"] = cfg.train.ood.keep;
  train["ood_ridge"] = cfg.train.ood.ridge;
  train["ood_bank_capacity"] = cfg.train.ood.bank_capacity;
  j["train"] = train;
  return j;
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"version", "seed", "mode", "detector", "gradient", "gan", "train"},
                 "run config");
  if (!j.contains("version")) throw ConfigError("run config missing 'version'");
  if (j.at("version").get<int>() != kConfigVersion)
    throw VersionError("unsupported config version");

  RunConfig cfg;
  cfg.seed = j.value("seed", uint64_t{0});
  if (j.contains("mode")) cfg.train_mode = perturb_kind_from_string(j.at("mode").get<std::string>());
  if (j.contains("detector")) cfg.detector = detector_config_from_json(j.at("detector"));

  if (j.contains("gradient")) {
    const auto& g = j.at("gradient");
    reject_unknown(g, {"eps", "pattern", "block_side_min", "block_side_max",
                       "block_anchor_density"},
                   "gradient config");
    cfg.gradient.eps = g.value("eps", cfg.gradient.eps);
    if (g.contains("pattern"))
      cfg.gradient.mode = gradient_mode_from_string(g.at("pattern").get<std::string>());
    cfg.gradient.block_side_min = g.value("block_side_min", cfg.gradient.block_side_min);
    cfg.gradient.block_side_max = g.value("block_side_max", cfg.gradient.block_side_max);
    cfg.gradient.block_anchor_density =
        g.value("block_anchor_density", cfg.gradient.block_anchor_density);
  }
  if (j.contains("gan")) {
    const auto& g = j.at("gan");
    reject_unknown(g, {"eps_min", "eps_max", "gamma", "subset_prob_min", "subset_prob_max",
                       "patch_side_min", "patch_side_max", "dominant_patch_prob"},
                   "gan config");
    cfg.gan.eps_min = g.value("eps_min", cfg.gan.eps_min);
    cfg.gan.eps_max = g.value("eps_max", cfg.gan.eps_max);
    cfg.gan.gamma = g.value("gamma", cfg.gan.gamma);
    cfg.gan.subset_prob_min = g.value("subset_prob_min", cfg.gan.subset_prob_min);
    cfg.gan.subset_prob_max = g.value("subset_prob_max", cfg.gan.subset_prob_max);
    cfg.gan.patch_side_min = g.value("patch_side_min", cfg.gan.patch_side_min);
    cfg.gan.patch_side_max = g.value("patch_side_max", cfg.gan.patch_side_max);
    cfg.gan.dominant_patch_prob = g.value("dominant_patch_prob", cfg.gan.dominant_patch_prob);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, {"beta", "ood_num_candidates", "ood_keep", "ood_ridge",
                       "ood_bank_capacity"},
                   "train config");
    cfg.train.beta = t.value("beta", cfg.train.beta);
    cfg.train.ood.num_candidates = t.value("ood_num_candidates", cfg.train.ood.num_candidates);
    cfg.train.ood.keep = t.value("ood_keep", cfg.train.ood.keep);
    cfg.train.ood.ridge = t.value("ood_ridge", cfg.train.ood.ridge);
    cfg.train.ood.bank_capacity = t.value("ood_bank_capacity", cfg.train.ood.bank_capacity);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return run_config_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
}

PerturbedImage perturb_one(const ImageTensor& img, const LandmarkSet& landmarks,
                           PerturbKind kind, const GradientPerturbConfig& grad_cfg,
                           const GanPerturbConfig& gan_cfg, Rng& rng) {
  if (kind == PerturbKind::kAuto)
    kind = static_cast<PerturbKind>(rng.uniform_int(0, 3));

  PerturbedImage out;
  if (kind == PerturbKind::kGc) {
    auto result = perturb_image_gan(img, landmarks, gan_cfg, rng);
    out.image = std::move(result.image);
    out.noise = std::move(result.noise);
    out.mode = "gc";
    out.eps = result.eps;
    return out;
  }

  GradientPerturbConfig cfg = grad_cfg;
  switch (kind) {
    case PerturbKind::kPoint: cfg.mode = GradientMode::kPoint; break;
    case PerturbKind::kBlock: cfg.mode = GradientMode::kBlock; break;
    case PerturbKind::kMix: cfg.mode = GradientMode::kMix; break;
    default: break;
  }
  auto result = perturb_image_gradient(img, cfg, rng);
  out.image = std::move(result.image);
  out.noise = std::move(result.noise);
  out.mode = to_string(result.mode);
  out.eps = cfg.eps;
  return out;
}

TrainResult train_detector(const std::vector<ImageTensor>& reals,
                           const std::vector<LandmarkSet>& landmarks, const RunConfig& cfg) {
  cfg.validate();
  const size_t n = reals.size();
  if (landmarks.size() != n) throw DimensionError("landmark list must match image list");
  if (n < 2 * static_cast<size_t>(cfg.detector.batch_size))
    throw ConfigError("dataset too small: need at least 2 * batch_size real images");

  // Seeded 50/50 split: first half stays real (label 1), second half is
  // self-perturbed each epoch (label 0).
  std::vector<size_t> split(n);
  std::iota(split.begin(), split.end(), size_t{0});
  {
    Rng rng(derive_seed(cfg.seed, 0x53504C49ULL));
    for (size_t i = n; i > 1; --i)
      std::swap(split[i - 1], split[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
  }
  const size_t n_pos = n / 2;

  Trainer trainer(init_model(cfg.detector), cfg.train);
  nlohmann::json steps = nlohmann::json::array();

  for (int epoch = 0; epoch < cfg.detector.epochs; ++epoch) {
    {
      Rng outlier_rng(derive_seed(cfg.seed, 0x4F55544CULL, static_cast<uint64_t>(epoch)));
      trainer.refresh_outliers(outlier_rng);
    }

    // Fresh perturbations for the negative half.
    std::vector<ImageTensor> negatives(n - n_pos);
    parallel_for(n - n_pos, [&](size_t i) {
      const size_t src = split[n_pos + i];
      Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch) * 0x10001 + 1, src));
      negatives[i] =
          perturb_one(reals[src], landmarks[src], cfg.train_mode, cfg.gradient, cfg.gan, rng)
              .image;
    });

    // Epoch sample order.
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    {
      Rng rng(derive_seed(cfg.seed, 0x4F524445ULL, static_cast<uint64_t>(epoch)));
      for (size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
    }

    const size_t batch_size = static_cast<size_t>(cfg.detector.batch_size);
    for (size_t start = 0; start + 1 <= n; start += batch_size) {
      const size_t end = std::min(n, start + batch_size);
      if (end - start < 2) break;  // skip degenerate trailing batch
      std::vector<const ImageTensor*> batch;
      std::vector<int> labels;
      for (size_t k = start; k < end; ++k) {
        const size_t pos = order[k];
        if (pos < n_pos) {
          batch.push_back(&reals[split[pos]]);
          labels.push_back(kRealClass);
        } else {
          batch.push_back(&negatives[pos - n_pos]);
          labels.push_back(kAdvClass);
        }
      }
      const LossBreakdown loss = trainer.step(batch, labels);
      nlohmann::json step;
      step["epoch"] = epoch;
      step["cls"] = loss.cls;
      step["uncertainty"] = loss.uncertainty;
      steps.push_back(std::move(step));
    }
  }

  TrainResult result{trainer.model(), trainer.gaussian(), nlohmann::json()};
  result.curve["schema_version"] = kReportSchemaVersion;
  result.curve["steps"] = std::move(steps);
  return result;
}

std::vector<ScoredSample> score_images(const DetectorModel& model,
                                       const std::vector<ImageTensor>& images,
                                       int true_label, const std::string& source) {
  std::vector<ScoredSample> samples(images.size());
  parallel_for(images.size(), [&](size_t i) {
    samples[i] = {adv_score(model, images[i]), true_label, source};
  });
  return samples;
}

nlohmann::json make_eval_report(const std::vector<ScoredSample>& samples) {
  nlohmann::json report;
  report["schema_version"] = kReportSchemaVersion;
  report["kind"] = "eval";
  report["tool_version"] = kToolVersion;

  size_t n_real = 0, n_adv = 0;
  for (const auto& s : samples) (s.true_label == kRealClass ? n_real : n_adv) += 1;
  report["n_real"] = n_real;
  report["n_adv"] = n_adv;
  report["auc"] = auc(samples);
  report["accuracy_at_0.5"] = accuracy_at(samples, 0.5);

  // Per-source AUC: each adversarial source against all real samples.
  std::vector<ScoredSample> reals;
  std::map<std::string, std::vector<ScoredSample>> by_source;
  for (const auto& s : samples) {
    if (s.true_label == kRealClass)
      reals.push_back(s);
    else
      by_source[s.source].push_back(s);
  }
  auto& breakdown = report["per_source"];
  breakdown = nlohmann::json::object();
  for (const auto& [source, adv] : by_source) {
    std::vector<ScoredSample> merged = reals;
    merged.insert(merged.end(), adv.begin(), adv.end());
    nlohmann::json entry;
    entry["n"] = adv.size();
    entry["auc"] = auc(merged);
    breakdown[source] = std::move(entry);
  }
  return report;
}

LoadedDataset load_dataset_dir(const std::filesystem::path& dir, bool with_landmarks,
                               const std::optional<std::filesystem::path>& landmark_dir) {
  LoadedDataset ds;
  const auto manifest_path = dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    const auto manifest = load_manifest(manifest_path);
    for (const auto& item : manifest.items) ds.image_paths.push_back(dir / item.image);
  } else {
    ds.image_paths = list_png_files(dir);
  }
  if (ds.image_paths.empty()) throw IoError("no PNG images found in " + dir.string());

  ds.images.resize(ds.image_paths.size());
  parallel_for(ds.image_paths.size(), [&](size_t i) { ds.images[i] = load_image(ds.image_paths[i]); });

  if (with_landmarks) {
    ds.landmarks.resize(ds.image_paths.size());
    for (size_t i = 0; i < ds.image_paths.size(); ++i) {
      const auto base = landmark_dir ? *landmark_dir / ds.image_paths[i].filename()
                                     : ds.image_paths[i];
      ds.landmarks[i] = load_landmarks(landmarks_path_for(base));
    }
  }
  return ds;
}

FixturePool make_fixture_pool(int count, const FixtureSpec& spec_template) {
  FixturePool pool;
  pool.images.resize(static_cast<size_t>(count));
  pool.landmarks.resize(static_cast<size_t>(count));
  parallel_for(static_cast<size_t>(count), [&](size_t i) {
    FixtureSpec spec = spec_template;
    spec.seed = derive_seed(spec_template.seed, i);
    Fixture f = gen_fixture(spec);
    pool.images[i] = std::move(f.image);
    pool.landmarks[i] = std::move(f.landmarks);
  });
  return pool;
}

std::vector<ImageTensor> perturb_pool(const FixturePool& pool, PerturbKind kind,
                                      const GradientPerturbConfig& grad_cfg,
                                      const GanPerturbConfig& gan_cfg, uint64_t seed) {
  std::vector<ImageTensor> out(pool.images.size());
  parallel_for(pool.images.size(), [&](size_t i) {
    Rng rng(derive_seed(seed, i));
    out[i] = perturb_one(pool.images[i], pool.landmarks[i], kind, grad_cfg, gan_cfg, rng).image;
  });
  return out;
}

}  // namespace advdet
