#include "advdet/ood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "advdet/error.hpp"
#include "advdet/util.hpp"

namespace advdet {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
std::vector<double> cholesky(const std::vector<double>& a, int d) {
  std::vector<double> l(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<size_t>(i) * d + j];
      for (int k = 0; k < j; ++k)
        s -= l[static_cast<size_t>(i) * d + k] * l[static_cast<size_t>(j) * d + k];
      if (i == j) {
        if (s <= 0.0) throw Error("covariance not positive definite");
        l[static_cast<size_t>(i) * d + j] = std::sqrt(s);
      } else {
        l[static_cast<size_t>(i) * d + j] = s / l[static_cast<size_t>(j) * d + j];
      }
    }
  }
  return l;
}

// Solve L y = r in place.
void forward_solve(const std::vector<double>& l, int d, std::vector<double>& r) {
  for (int i = 0; i < d; ++i) {
    double s = r[static_cast<size_t>(i)];
    for (int k = 0; k < i; ++k) s -= l[static_cast<size_t>(i) * d + k] * r[static_cast<size_t>(k)];
    r[static_cast<size_t>(i)] = s / l[static_cast<size_t>(i) * d + i];
  }
}

}  // namespace

uint64_t GaussianModel::fingerprint() const {
  uint64_t h = fnv1a64(mean.data(), mean.size() * sizeof(double));
  h ^= fnv1a64(cov.data(), cov.size() * sizeof(double));
  return h;
}

GaussianModel fit_gaussian(const std::vector<std::vector<double>>& features, double ridge) {
  if (features.size() < 2)
    throw InsufficientDataError("fit_gaussian needs at least 2 samples");
  if (!(ridge > 0.0)) throw ConfigError("ridge must be > 0");
  const size_t n = features.size();
  const size_t d = features[0].size();
  for (const auto& f : features)
    if (f.size() != d) throw DimensionError("inconsistent feature dimensions");

  GaussianModel g;
  g.ridge = ridge;
  g.count = n;
  g.underdetermined = n < d + 1;

  g.mean.assign(d, 0.0);
  for (const auto& f : features)
    for (size_t k = 0; k < d; ++k) g.mean[k] += f[k];
  for (double& v : g.mean) v /= static_cast<double>(n);

  g.cov.assign(d * d, 0.0);
  std::vector<double> centered(d);
  for (const auto& f : features) {
    for (size_t k = 0; k < d; ++k) centered[k] = f[k] - g.mean[k];
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j <= i; ++j) g.cov[i * d + j] += centered[i] * centered[j];
  }
  const double norm = 1.0 / static_cast<double>(n - 1);
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      g.cov[i * d + j] *= norm;
      g.cov[j * d + i] = g.cov[i * d + j];
    }
    g.cov[i * d + i] += ridge;
  }

  g.chol = cholesky(g.cov, static_cast<int>(d));
  return g;
}

void rebuild_cholesky(GaussianModel& g) {
  const size_t d = g.mean.size();
  if (g.cov.size() != d * d) throw DimensionError("covariance size mismatch");
  g.chol = cholesky(g.cov, static_cast<int>(d));
}

double log_density(const GaussianModel& g, const double* v) {
  const int d = g.dim();
  std::vector<double> r(static_cast<size_t>(d));
  for (int k = 0; k < d; ++k) r[static_cast<size_t>(k)] = v[k] - g.mean[static_cast<size_t>(k)];
  forward_solve(g.chol, d, r);

  double quad = 0.0;
  for (double y : r) quad += y * y;
  double half_logdet = 0.0;
  for (int i = 0; i < d; ++i) half_logdet += std::log(g.chol[static_cast<size_t>(i) * d + i]);

  return -0.5 * d * kLog2Pi - half_logdet - 0.5 * quad;
}

double log_density(const GaussianModel& g, const std::vector<double>& v) {
  if (static_cast<int>(v.size()) != g.dim()) throw DimensionError("feature dim mismatch");
  return log_density(g, v.data());
}

double mahalanobis_sq(const GaussianModel& g, const double* v) {
  const int d = g.dim();
  std::vector<double> r(static_cast<size_t>(d));
  for (int k = 0; k < d; ++k) r[static_cast<size_t>(k)] = v[k] - g.mean[static_cast<size_t>(k)];
  forward_solve(g.chol, d, r);
  double quad = 0.0;
  for (double y : r) quad += y * y;
  return quad;
}

VirtualOutlierSet sample_virtual_outliers(const GaussianModel& g, int num_candidates,
                                          int keep, Rng& rng) {
  if (keep < 1 || keep > num_candidates)
    throw ConfigError("keep must satisfy 1 <= keep <= num_candidates");
  const int d = g.dim();

  std::vector<std::vector<double>> samples(static_cast<size_t>(num_candidates));
  std::vector<double> densities(static_cast<size_t>(num_candidates));
  std::vector<double> z(static_cast<size_t>(d));
  for (int s = 0; s < num_candidates; ++s) {
    for (double& v : z) v = rng.normal();
    std::vector<double> x(g.mean);
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int k = 0; k <= i; ++k)
        acc += g.chol[static_cast<size_t>(i) * d + k] * z[static_cast<size_t>(k)];
      x[static_cast<size_t>(i)] += acc;
    }
    densities[static_cast<size_t>(s)] = log_density(g, x.data());
    samples[static_cast<size_t>(s)] = std::move(x);
  }

  std::vector<int> order(static_cast<size_t>(num_candidates));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = densities[static_cast<size_t>(a)];
    const double db = densities[static_cast<size_t>(b)];
    return da < db || (da == db && a < b);
  });

  VirtualOutlierSet set;
  set.source_fingerprint = g.fingerprint();
  set.outliers.reserve(static_cast<size_t>(keep));
  for (int i = 0; i < keep; ++i)
    set.outliers.push_back(std::move(samples[static_cast<size_t>(order[static_cast<size_t>(i)])]));
  set.cutoff = keep < num_candidates
                   ? densities[static_cast<size_t>(order[static_cast<size_t>(keep)])]
                   : std::numeric_limits<double>::infinity();
  return set;
}

void FeatureBank::push(std::vector<double> feature) {
  items_.push_back(std::move(feature));
  while (items_.size() > capacity_) items_.pop_front();
}

std::vector<std::vector<double>> FeatureBank::snapshot() const {
  return {items_.begin(), items_.end()};
}

namespace {

std::array<double, 2> ood_logits(const DetectorModel& model, const double* feature) {
  const int d = model.cfg.embedding;
  const auto& w = model.cfg.ood_share_cls_head ? model.params.head_w : model.params.ood_w;
  const auto& b = model.cfg.ood_share_cls_head ? model.params.head_b : model.params.ood_b;
  std::array<double, 2> z{};
  for (int c = 0; c < 2; ++c) {
    double s = b[static_cast<size_t>(c)];
    const double* wc = w.data() + static_cast<size_t>(c) * d;
    for (int k = 0; k < d; ++k) s += wc[k] * feature[k];
    z[static_cast<size_t>(c)] = s;
  }
  return z;
}

double logsumexp2(const std::array<double, 2>& z) {
  const double m = std::max(z[0], z[1]);
  return m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
}

}  // namespace

double energy(const DetectorModel& model, const double* feature) {
  return -logsumexp2(ood_logits(model, feature));
}

double energy(const DetectorModel& model, const std::vector<double>& feature) {
  if (static_cast<int>(feature.size()) != model.cfg.embedding)
    throw DimensionError("feature dim mismatch");
  return energy(model, feature.data());
}

OodScoreTrace ood_score_trace(const DetectorModel& model, const double* feature) {
  OodScoreTrace t;
  t.logits = ood_logits(model, feature);
  t.score_input = model.cfg.ood_scalar_linear ? -t.logits[0] : logsumexp2(t.logits);

  double s = model.params.phi_b2[0];
  for (int k = 0; k < kPhiHidden; ++k) {
    const double pre = model.params.phi_w1[static_cast<size_t>(k)] * t.score_input +
                       model.params.phi_b1[static_cast<size_t>(k)];
    t.pre1[static_cast<size_t>(k)] = pre;
    if (pre > 0.0) s += model.params.phi_w2[static_cast<size_t>(k)] * pre;
  }
  t.score = s;
  return t;
}

double ood_score(const DetectorModel& model, const double* feature) {
  return ood_score_trace(model, feature).score;
}

void ood_score_backward(const DetectorModel& model, const OodScoreTrace& trace,
                        const double* feature, double d_score, ParamSet& grads,
                        double* d_feature) {
  const int d = model.cfg.embedding;

  // phi MLP.
  grads.phi_b2[0] += d_score;
  double d_input = 0.0;
  for (int k = 0; k < kPhiHidden; ++k) {
    const double pre = trace.pre1[static_cast<size_t>(k)];
    const double relu = pre > 0.0 ? pre : 0.0;
    grads.phi_w2[static_cast<size_t>(k)] += d_score * relu;
    if (pre > 0.0) {
      const double d_pre = d_score * model.params.phi_w2[static_cast<size_t>(k)];
      grads.phi_w1[static_cast<size_t>(k)] += d_pre * trace.score_input;
      grads.phi_b1[static_cast<size_t>(k)] += d_pre;
      d_input += d_pre * model.params.phi_w1[static_cast<size_t>(k)];
    }
  }

  // Score input -> head logits.
  std::array<double, 2> d_logits{};
  if (model.cfg.ood_scalar_linear) {
    d_logits[0] = -d_input;
  } else {
    const auto sm = softmax2(trace.logits);
    d_logits[0] = d_input * sm[0];
    d_logits[1] = d_input * sm[1];
  }

  auto& w_grad = model.cfg.ood_share_cls_head ? grads.head_w : grads.ood_w;
  auto& b_grad = model.cfg.ood_share_cls_head ? grads.head_b : grads.ood_b;
  const auto& w = model.cfg.ood_share_cls_head ? model.params.head_w : model.params.ood_w;
  for (int c = 0; c < 2; ++c) {
    const double g = d_logits[static_cast<size_t>(c)];
    if (g == 0.0) continue;
    double* dw = w_grad.data() + static_cast<size_t>(c) * d;
    const double* wc = w.data() + static_cast<size_t>(c) * d;
    for (int k = 0; k < d; ++k) {
      dw[k] += g * feature[k];
      if (d_feature) d_feature[k] += g * wc[k];
    }
    b_grad[static_cast<size_t>(c)] += g;
  }
}

double softplus(double x) {
  return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double uncertainty_loss(const DetectorModel& model,
                        const std::vector<std::vector<double>>& real_features,
                        const VirtualOutlierSet& outliers) {
  if (real_features.empty() || outliers.outliers.empty())
    throw InsufficientDataError("uncertainty_loss needs nonempty feature and outlier sets");

  double out_term = 0.0;
  for (const auto& v : outliers.outliers)
    out_term += softplus(-ood_score(model, v.data()));
  out_term /= static_cast<double>(outliers.outliers.size());

  double real_term = 0.0;
  for (const auto& x : real_features) real_term += softplus(ood_score(model, x.data()));
  real_term /= static_cast<double>(real_features.size());

  return out_term + real_term;
}

double combined_loss(double cls_loss, double unc_loss, double beta) {
  if (!std::isfinite(cls_loss) || !std::isfinite(unc_loss))
    throw DivergenceError("non-finite loss component");
  return cls_loss + beta * unc_loss;
}

}  // namespace advdet
