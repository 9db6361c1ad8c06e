#pragma once

#include <optional>
#include <vector>

#include "advdet/detector.hpp"
#include "advdet/ood.hpp"

namespace advdet {

/// Virtual-outlier sampling knobs (epsilon-likelihood tail realized as a
/// keep-t-of-M quantile).
struct OodOptions {
  int num_candidates = 1000;  // M
  int keep = 20;              // t
  double ridge = 1e-4;
  size_t bank_capacity = 1024;

  void validate() const;
};

struct TrainOptions {
  double beta = 0.1;  // weight of the uncertainty loss
  OodOptions ood;

  void validate() const;
};

struct LossBreakdown {
  double cls = 0.0;
  double uncertainty = 0.0;
};

struct BatchLoss {
  double cls = 0.0;
  double unc = 0.0;
  ParamSet grads;
  std::vector<std::vector<double>> real_pooled;  // pooled features of label-1 samples
};

/// Forward + exact reverse pass over a batch for the combined objective
/// L_cls + beta * L_uncertainty. `outliers` may be null (no regularization
/// term). loss_scale multiplies every gradient component but not the
/// reported loss values. Throws DivergenceError on non-finite losses.
BatchLoss compute_loss_and_grads(const DetectorModel& model,
                                 const std::vector<const ImageTensor*>& batch,
                                 const std::vector<int>& labels,
                                 const std::vector<std::vector<double>>* outliers,
                                 double beta, double loss_scale = 1.0);

/// Classification-path gradients only (beta = 0).
ParamSet backward(const DetectorModel& model, const std::vector<const ImageTensor*>& batch,
                  const std::vector<int>& labels);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;

  explicit AdamState(const DetectorConfig& cfg)
      : m(param_count(cfg), 0.0), v(param_count(cfg), 0.0) {}
};

/// One bias-corrected Adam update of every parameter.
void adam_step(DetectorModel& model, const ParamSet& grads, AdamState& state, double lr);

/// One optimization step: combined loss, gradients, Adam update, feature
/// bank push. Loss components returned before the update.
LossBreakdown train_step(DetectorModel& model, const std::vector<const ImageTensor*>& batch,
                         const std::vector<int>& labels, const VirtualOutlierSet* outliers,
                         double beta, AdamState& adam, FeatureBank* bank);

/// Owns the model, optimizer state and the OOD estimation state.
class Trainer {
 public:
  Trainer(DetectorModel model, TrainOptions opts);

  LossBreakdown step(const std::vector<const ImageTensor*>& batch,
                     const std::vector<int>& labels);

  // Refit the Gaussian from the bank and resample virtual outliers; no-op
  // (regularization stays off) until the bank holds >= d+1 features.
  void refresh_outliers(Rng& rng);

  bool regularization_active() const { return outliers_.has_value(); }
  const DetectorModel& model() const { return model_; }
  DetectorModel& model() { return model_; }
  const FeatureBank& bank() const { return bank_; }
  const std::optional<GaussianModel>& gaussian() const { return gaussian_; }
  const std::optional<VirtualOutlierSet>& outliers() const { return outliers_; }
  const TrainOptions& options() const { return opts_; }

 private:
  DetectorModel model_;
  TrainOptions opts_;
  AdamState adam_;
  FeatureBank bank_;
  std::optional<GaussianModel> gaussian_;
  std::optional<VirtualOutlierSet> outliers_;
};

}  // namespace advdet
