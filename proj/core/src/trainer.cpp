#include "advdet/trainer.hpp"

#include <cmath>

#include "advdet/error.hpp"

namespace advdet {

void OodOptions::validate() const {
  if (num_candidates < 1 || keep < 1 || keep > num_candidates)
    throw ConfigError("ood sampling requires 1 <= keep <= num_candidates");
  if (!(ridge > 0.0)) throw ConfigError("ood ridge must be > 0");
  if (bank_capacity < 2) throw ConfigError("feature bank capacity must be >= 2");
}

void TrainOptions::validate() const {
  if (beta < 0.0) throw ConfigError("beta must be >= 0");
  ood.validate();
}

BatchLoss compute_loss_and_grads(const DetectorModel& model,
                                 const std::vector<const ImageTensor*>& batch,
                                 const std::vector<int>& labels,
                                 const std::vector<std::vector<double>>* outliers,
                                 double beta, double loss_scale) {
  if (batch.empty() || batch.size() != labels.size())
    throw DimensionError("batch and label sizes must match and be nonempty");

  BatchLoss result;
  result.grads = make_param_set(model.cfg);

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  size_t n_real = 0;
  for (int y : labels) n_real += y == kRealClass;

  const bool regularize =
      beta != 0.0 && outliers != nullptr && !outliers->empty();

  double real_term = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const int label = labels[i];
    const ForwardTrace trace = forward_trace(model, *batch[i]);
    const auto& logits = trace.train_logits();
    result.cls += cross_entropy(logits, label) * inv_batch;

    const auto train_probs = softmax2(logits);
    std::array<double, 2> d_final{};
    for (int c = 0; c < 2; ++c)
      d_final[static_cast<size_t>(c)] =
          (train_probs[static_cast<size_t>(c)] - (c == label ? 1.0 : 0.0)) *
          loss_scale * inv_batch;

    std::vector<double> d_pooled;
    if (label == kRealClass) {
      if (regularize && n_real > 0) {
        const OodScoreTrace ot = ood_score_trace(model, trace.pooled.data());
        real_term += softplus(ot.score) / static_cast<double>(n_real);
        const double d_score =
            loss_scale * beta * sigmoid(ot.score) / static_cast<double>(n_real);
        d_pooled.assign(trace.pooled.size(), 0.0);
        ood_score_backward(model, ot, trace.pooled.data(), d_score, result.grads,
                           d_pooled.data());
      }
      result.real_pooled.push_back(trace.pooled);
    }
    backward_trace(model, trace, d_final, d_pooled, result.grads);
  }

  if (regularize) {
    double out_term = 0.0;
    const double inv_out = 1.0 / static_cast<double>(outliers->size());
    for (const auto& v : *outliers) {
      const OodScoreTrace ot = ood_score_trace(model, v.data());
      out_term += softplus(-ot.score) * inv_out;
      const double d_score = -loss_scale * beta * sigmoid(-ot.score) * inv_out;
      ood_score_backward(model, ot, v.data(), d_score, result.grads, nullptr);
    }
    result.unc = out_term + real_term;
  }

  if (!std::isfinite(result.cls) || !std::isfinite(result.unc))
    throw DivergenceError("non-finite training loss");
  return result;
}

ParamSet backward(const DetectorModel& model, const std::vector<const ImageTensor*>& batch,
                  const std::vector<int>& labels) {
  return compute_loss_and_grads(model, batch, labels, nullptr, 0.0).grads;
}

void adam_step(DetectorModel& model, const ParamSet& grads, AdamState& state, double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  auto params = param_views(model.params);
  auto grad_views = param_views(const_cast<ParamSet&>(grads));
  size_t offset = 0;
  for (size_t b = 0; b < params.size(); ++b) {
    double* p = params[b].data;
    const double* g = grad_views[b].data;
    for (size_t i = 0; i < params[b].size; ++i, ++offset) {
      double& m = state.m[offset];
      double& v = state.v[offset];
      m = state.beta1 * m + (1.0 - state.beta1) * g[i];
      v = state.beta2 * v + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
  model.check_finite();
}

LossBreakdown train_step(DetectorModel& model, const std::vector<const ImageTensor*>& batch,
                         const std::vector<int>& labels, const VirtualOutlierSet* outliers,
                         double beta, AdamState& adam, FeatureBank* bank) {
  BatchLoss loss = compute_loss_and_grads(
      model, batch, labels, outliers ? &outliers->outliers : nullptr, beta);
  adam_step(model, loss.grads, adam, model.cfg.learning_rate);
  if (bank) {
    for (auto& f : loss.real_pooled) bank->push(std::move(f));
  }
  return {loss.cls, loss.unc};
}

Trainer::Trainer(DetectorModel model, TrainOptions opts)
    : model_(std::move(model)),
      opts_(opts),
      adam_(model_.cfg),
      bank_(opts.ood.bank_capacity) {
  opts_.validate();
}

LossBreakdown Trainer::step(const std::vector<const ImageTensor*>& batch,
                            const std::vector<int>& labels) {
  return train_step(model_, batch, labels, outliers_ ? &*outliers_ : nullptr, opts_.beta,
                    adam_, &bank_);
}

void Trainer::refresh_outliers(Rng& rng) {
  if (opts_.beta == 0.0) return;
  if (bank_.size() < static_cast<size_t>(model_.cfg.embedding) + 1) return;
  gaussian_ = fit_gaussian(bank_.snapshot(), opts_.ood.ridge);
  outliers_ = sample_virtual_outliers(*gaussian_, opts_.ood.num_candidates, opts_.ood.keep, rng);
}

}  // namespace advdet
