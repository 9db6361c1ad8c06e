#include "advdet/checkpoint.hpp"

#include "advdet/error.hpp"
#include "advdet/util.hpp"
#include "advdet/version.hpp"

namespace advdet {

namespace {

// Reject unknown keys so config typos never pass silently.
void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

nlohmann::json detector_config_to_json(const DetectorConfig& cfg) {
  nlohmann::json j;
  j["input_side"] = cfg.input_side;
  j["channels"] = cfg.channels;
  j["embedding"] = cfg.embedding;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["input_local_contrast"] = cfg.input_local_contrast;
  j["mpc_train_temperature"] = cfg.mpc_train_temperature;
  j["mpc_per_class_max"] = cfg.mpc_per_class_max;
  j["ood_share_cls_head"] = cfg.ood_share_cls_head;
  j["ood_scalar_linear"] = cfg.ood_scalar_linear;
  return j;
}

DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"input_side", "channels", "embedding", "learning_rate", "batch_size",
                       "epochs", "seed", "input_local_contrast", "mpc_train_temperature", "mpc_per_class_max",
                       "ood_share_cls_head", "ood_scalar_linear"},
                      "detector config");
  DetectorConfig cfg;
  cfg.input_side = j.value("input_side", cfg.input_side);
  cfg.channels = j.value("channels", cfg.channels);
  cfg.embedding = j.value("embedding", cfg.embedding);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.input_local_contrast = j.value("input_local_contrast", cfg.input_local_contrast);
  cfg.mpc_train_temperature = j.value("mpc_train_temperature", cfg.mpc_train_temperature);
  cfg.mpc_per_class_max = j.value("mpc_per_class_max", cfg.mpc_per_class_max);
  cfg.ood_share_cls_head = j.value("ood_share_cls_head", cfg.ood_share_cls_head);
  cfg.ood_scalar_linear = j.value("ood_scalar_linear", cfg.ood_scalar_linear);
  cfg.validate();
  return cfg;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["format"] = "advdet-checkpoint";
  j["tool_version"] = kToolVersion;
  j["config"] = detector_config_to_json(ckpt.model.cfg);
  j["init_seed"] = ckpt.model.init_seed;

  auto& params = j["params"];
  auto views = param_views(const_cast<ParamSet&>(ckpt.model.params));
  for (const auto& view : views)
    params[view.name] = std::vector<double>(view.data, view.data + view.size);

  if (ckpt.gaussian) {
    nlohmann::json g;
    g["mean"] = ckpt.gaussian->mean;
    g["cov"] = ckpt.gaussian->cov;
    g["ridge"] = ckpt.gaussian->ridge;
    g["count"] = ckpt.gaussian->count;
    g["underdetermined"] = ckpt.gaussian->underdetermined;
    j["gaussian"] = g;
  } else {
    j["gaussian"] = nullptr;
  }
  j["training_image_fnv"] = ckpt.training_image_fnv;
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("version")) throw VersionError("checkpoint missing version field");
  const int version = j.at("version").get<int>();
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.model.cfg = detector_config_from_json(j.at("config"));
  ckpt.model.params = make_param_set(ckpt.model.cfg);
  ckpt.model.init_seed = j.value("init_seed", uint64_t{0});

  const auto& params = j.at("params");
  for (auto& view : param_views(ckpt.model.params)) {
    const auto values = params.at(view.name).get<std::vector<double>>();
    if (values.size() != view.size)
      throw VersionError("parameter block " + view.name + " has wrong size");
    std::copy(values.begin(), values.end(), view.data);
  }
  ckpt.model.check_finite();

  if (j.contains("gaussian") && !j.at("gaussian").is_null()) {
    const auto& g = j.at("gaussian");
    GaussianModel gauss;
    gauss.mean = g.at("mean").get<std::vector<double>>();
    gauss.cov = g.at("cov").get<std::vector<double>>();
    gauss.ridge = g.value("ridge", 1e-4);
    gauss.count = g.value("count", size_t{0});
    gauss.underdetermined = g.value("underdetermined", false);
    rebuild_cholesky(gauss);
    ckpt.gaussian = std::move(gauss);
  }
  ckpt.training_image_fnv = j.value("training_image_fnv", std::vector<std::string>{});
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_json(ckpt).dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace advdet
