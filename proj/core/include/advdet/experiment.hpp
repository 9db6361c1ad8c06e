#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advdet/checkpoint.hpp"
#include "advdet/evalkit.hpp"
#include "advdet/fixtures.hpp"
#include "advdet/perturb_gan.hpp"
#include "advdet/perturb_gradient.hpp"
#include "advdet/trainer.hpp"

namespace advdet {

/// Perturbation family selector for dataset synthesis and training.
enum class PerturbKind { kPoint, kBlock, kMix, kGc, kAuto };

const char* to_string(PerturbKind kind);
PerturbKind perturb_kind_from_string(const std::string& s);

/// Everything a reproducible run needs; serialized verbatim into run
/// output directories. Unknown config keys are rejected.
struct RunConfig {
  DetectorConfig detector;
  GradientPerturbConfig gradient;
  GanPerturbConfig gan;
  TrainOptions train;
  PerturbKind train_mode = PerturbKind::kAuto;
  uint64_t seed = 0;

  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

struct PerturbedImage {
  ImageTensor image;
  PerturbationField noise;
  std::string mode;   // point / block / mix / gc
  double eps = 0.0;   // drawn magnitude, 1/255 units
};

/// Apply one perturbation of the requested kind (kAuto draws uniformly
/// over the four families). gc requires usable landmarks.
PerturbedImage perturb_one(const ImageTensor& img, const LandmarkSet& landmarks,
                           PerturbKind kind, const GradientPerturbConfig& grad_cfg,
                           const GanPerturbConfig& gan_cfg, Rng& rng);

struct TrainResult {
  DetectorModel model;
  std::optional<GaussianModel> gaussian;
  nlohmann::json curve;  // per-step cls/uncertainty losses
};

/// Detector training: seeded 50/50 split of the real set, the second
/// half re-perturbed on the fly each epoch and labeled 0, per-epoch
/// shuffling and Gaussian/outlier refresh. Deterministic given cfg.seed.
TrainResult train_detector(const std::vector<ImageTensor>& reals,
                           const std::vector<LandmarkSet>& landmarks, const RunConfig& cfg);

std::vector<ScoredSample> score_images(const DetectorModel& model,
                                       const std::vector<ImageTensor>& images,
                                       int true_label, const std::string& source);

/// Evaluation report body (auc, accuracy@0.5, counts, per-source AUC).
nlohmann::json make_eval_report(const std::vector<ScoredSample>& samples);

struct LoadedDataset {
  std::vector<ImageTensor> images;
  std::vector<LandmarkSet> landmarks;  // empty when not requested
  std::vector<std::filesystem::path> image_paths;
};

/// Load every PNG in a directory (manifest order when manifest.json is
/// present, lexicographic otherwise), optionally with sibling landmarks.
LoadedDataset load_dataset_dir(const std::filesystem::path& dir, bool with_landmarks,
                               const std::optional<std::filesystem::path>& landmark_dir = {});

/// In-memory fixture pools for cross experiments and the acceptance suite.
struct FixturePool {
  std::vector<ImageTensor> images;
  std::vector<LandmarkSet> landmarks;
};

FixturePool make_fixture_pool(int count, const FixtureSpec& spec_template);

/// Perturb every image of a pool with the given kind (derived per-image
/// seeds from `seed`); returns perturbed images only.
std::vector<ImageTensor> perturb_pool(const FixturePool& pool, PerturbKind kind,
                                      const GradientPerturbConfig& grad_cfg,
                                      const GanPerturbConfig& gan_cfg, uint64_t seed);

}  // namespace advdet
