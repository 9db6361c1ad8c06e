#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "advdet/detector.hpp"
#include "advdet/rng.hpp"

namespace advdet {

/// Multivariate Gaussian fitted to pooled real-face features, with a ridge
/// added to the covariance so the Cholesky factor always exists.
struct GaussianModel {
  std::vector<double> mean;  // d
  std::vector<double> cov;   // d*d, unbiased sample covariance + ridge*I
  std::vector<double> chol;  // lower-triangular L with cov = L L^T
  double ridge = 0.0;
  size_t count = 0;           // samples used in the fit
  bool underdetermined = false;  // count < d+1

  int dim() const { return static_cast<int>(mean.size()); }
  uint64_t fingerprint() const;
};

/// Unbiased mean/covariance plus ridge*I; Cholesky cached. Throws
/// InsufficientDataError for fewer than 2 samples. Fits with fewer than
/// d+1 samples are marked underdetermined.
GaussianModel fit_gaussian(const std::vector<std::vector<double>>& features,
                           double ridge = 1e-4);

/// Refactor the stored covariance (used after deserialization).
void rebuild_cholesky(GaussianModel& g);

/// Exact log N(v; mean, cov) including the (2 pi)^{d/2} |cov|^{1/2}
/// normalizer, via Cholesky solve.
double log_density(const GaussianModel& g, const double* v);
double log_density(const GaussianModel& g, const std::vector<double>& v);

/// (v - mean)^T cov^{-1} (v - mean).
double mahalanobis_sq(const GaussianModel& g, const double* v);

/// Low-likelihood tail samples of the fitted Gaussian.
struct VirtualOutlierSet {
  std::vector<std::vector<double>> outliers;
  double cutoff = 0.0;  // smallest excluded log-density; +inf when keep == M
  uint64_t source_fingerprint = 0;
};

/// Draw num_candidates samples from the Gaussian and keep the `keep` with
/// the lowest log-density; the cutoff is the smallest log-density among the
/// discarded candidates, so every kept member sits strictly below it.
VirtualOutlierSet sample_virtual_outliers(const GaussianModel& g, int num_candidates,
                                          int keep, Rng& rng);

/// Bounded FIFO of recent pooled real-face features.
class FeatureBank {
 public:
  explicit FeatureBank(size_t capacity = 1024) : capacity_(capacity) {}

  void push(std::vector<double> feature);
  size_t size() const { return items_.size(); }
  size_t capacity() const { return capacity_; }
  std::vector<std::vector<double>> snapshot() const;

 private:
  size_t capacity_;
  std::deque<std::vector<double>> items_;
};

/// Energy of a feature under the 2-logit OOD linear head:
/// E = -log sum_k exp(f_k(feature)). Lower energy = more in-distribution.
double energy(const DetectorModel& model, const double* feature);
double energy(const DetectorModel& model, const std::vector<double>& feature);

/// Intermediate state of the score s(u) = phi(-E(u)) (or the scalar-linear
/// variant), kept for the reverse pass.
struct OodScoreTrace {
  std::array<double, 2> logits{};
  double score_input = 0.0;             // -E, or -f(u) in the scalar variant
  std::array<double, kPhiHidden> pre1{};  // phi hidden pre-activations
  double score = 0.0;
};

OodScoreTrace ood_score_trace(const DetectorModel& model, const double* feature);
double ood_score(const DetectorModel& model, const double* feature);

/// Accumulate d(score)/d(params) * d_score into grads; optionally also
/// d(score)/d(feature) into d_feature (length d, accumulated).
void ood_score_backward(const DetectorModel& model, const OodScoreTrace& trace,
                        const double* feature, double d_score, ParamSet& grads,
                        double* d_feature);

/// log(1 + exp(x)), overflow-safe.
double softplus(double x);
double sigmoid(double x);

/// Uncertainty loss: mean_v softplus(-s(v)) + mean_x softplus(s(x)).
/// Minimizing drives the score up on virtual outliers and down on real
/// features. Throws InsufficientDataError if either set is empty.
double uncertainty_loss(const DetectorModel& model,
                        const std::vector<std::vector<double>>& real_features,
                        const VirtualOutlierSet& outliers);

/// cls + beta * uncertainty.
double combined_loss(double cls_loss, double unc_loss, double beta);

}  // namespace advdet
