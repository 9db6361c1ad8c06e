#include "advdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "advdet/error.hpp"
#include "advdet/rng.hpp"

namespace advdet {

void DetectorConfig::validate() const {
  if (input_side < kSideMultiple || input_side % kSideMultiple != 0)
    throw ConfigError("input_side must be a positive multiple of 16");
  if (channels.size() != 4) throw ConfigError("expected 4 channel widths");
  for (int c : channels)
    if (c < 1) throw ConfigError("channel widths must be >= 1");
  if (embedding < 2) throw ConfigError("embedding must be >= 2");
  if (channels.back() != embedding)
    throw ConfigError("last channel width must equal the embedding size");
  if (grid_n() < 2) throw ConfigError("grid N must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

namespace {

int layer_in_channels(const DetectorConfig& cfg, int layer) {
  return layer == 0 ? cfg.input_channels() : cfg.channels[static_cast<size_t>(layer - 1)];
}

// Truncated-residual amplitude: saturates structured texture so only
// noise-scale local activity stays linear, and rescales it into the unit
// range the conv stack sees from the color channels.
constexpr double kResidualClip = 0.04;
constexpr double kResidualGain = 8.0;

// Fixed input stage, no trainable parameters: per-image-centered color
// channels plus the truncated rectified high-pass residual
// gain * min(|x - box3(x)|, clip). Centering removes the dominant global
// color nuisance; truncation makes small mean-zero noise a first-order
// (mean-coded) feature while structured texture saturates to a constant.
std::vector<double> build_input(const DetectorConfig& cfg, const ImageTensor& img) {
  const int side = img.height();
  if (!cfg.input_local_contrast) return img.data();

  double mean[3] = {0.0, 0.0, 0.0};
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) mean[c] += img.at(y, x, c);
  for (double& m : mean) m /= static_cast<double>(side) * side;

  std::vector<double> in(static_cast<size_t>(side) * side * 6);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double* px = in.data() + (static_cast<size_t>(y) * side + x) * 6;
      for (int c = 0; c < 3; ++c) {
        double box = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = std::clamp(y + dy, 0, side - 1);
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = std::clamp(x + dx, 0, side - 1);
            box += img.at(yy, xx, c);
          }
        }
        const double v = img.at(y, x, c);
        px[c] = v - mean[c];
        px[c + 3] = kResidualGain * std::min(std::fabs(v - box / 9.0), kResidualClip);
      }
    }
  }
  return in;
}

}  // namespace

ParamSet make_param_set(const DetectorConfig& cfg) {
  cfg.validate();
  ParamSet p;
  for (int l = 0; l < 4; ++l) {
    const int in_ch = layer_in_channels(cfg, l);
    const int out_ch = cfg.channels[static_cast<size_t>(l)];
    p.conv[static_cast<size_t>(l)].w.assign(static_cast<size_t>(out_ch) * 9 * in_ch, 0.0);
    p.conv[static_cast<size_t>(l)].b.assign(static_cast<size_t>(out_ch), 0.0);
  }
  const size_t d = static_cast<size_t>(cfg.embedding);
  p.head_w.assign(2 * d, 0.0);
  p.head_b.assign(2, 0.0);
  p.ood_w.assign(2 * d, 0.0);
  p.ood_b.assign(2, 0.0);
  p.phi_w1.assign(kPhiHidden, 0.0);
  p.phi_b1.assign(kPhiHidden, 0.0);
  p.phi_w2.assign(kPhiHidden, 0.0);
  p.phi_b2.assign(1, 0.0);
  return p;
}

std::vector<ParamView> param_views(ParamSet& p) {
  std::vector<ParamView> views;
  for (size_t l = 0; l < 4; ++l) {
    const std::string tag = "conv" + std::to_string(l + 1);
    views.push_back({tag + "_w", p.conv[l].w.data(), p.conv[l].w.size()});
    views.push_back({tag + "_b", p.conv[l].b.data(), p.conv[l].b.size()});
  }
  views.push_back({"head_w", p.head_w.data(), p.head_w.size()});
  views.push_back({"head_b", p.head_b.data(), p.head_b.size()});
  views.push_back({"ood_w", p.ood_w.data(), p.ood_w.size()});
  views.push_back({"ood_b", p.ood_b.data(), p.ood_b.size()});
  views.push_back({"phi_w1", p.phi_w1.data(), p.phi_w1.size()});
  views.push_back({"phi_b1", p.phi_b1.data(), p.phi_b1.size()});
  views.push_back({"phi_w2", p.phi_w2.data(), p.phi_w2.size()});
  views.push_back({"phi_b2", p.phi_b2.data(), p.phi_b2.size()});
  return views;
}

size_t param_count(const DetectorConfig& cfg) {
  size_t n = 0;
  for (int l = 0; l < 4; ++l) {
    const size_t in_ch = static_cast<size_t>(layer_in_channels(cfg, l));
    const size_t out_ch = static_cast<size_t>(cfg.channels[static_cast<size_t>(l)]);
    n += out_ch * 9 * in_ch + out_ch;
  }
  const size_t d = static_cast<size_t>(cfg.embedding);
  n += 2 * (2 * d + 2);                      // cls head + ood head
  n += 3 * kPhiHidden + 1;                   // phi MLP
  return n;
}

void DetectorModel::check_finite() const {
  auto& self = const_cast<DetectorModel&>(*this);
  for (const auto& view : param_views(self.params)) {
    for (size_t i = 0; i < view.size; ++i)
      if (!std::isfinite(view.data[i]))
        throw DivergenceError("non-finite parameter in block " + view.name);
  }
}

DetectorModel init_model(const DetectorConfig& cfg) {
  cfg.validate();
  DetectorModel model{cfg, make_param_set(cfg), cfg.seed};
  Rng rng(cfg.seed);

  auto fill_uniform = [&rng](std::vector<double>& w, size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w) v = rng.uniform(-bound, bound);
  };

  for (int l = 0; l < 4; ++l)
    fill_uniform(model.params.conv[static_cast<size_t>(l)].w,
                 static_cast<size_t>(layer_in_channels(cfg, l)) * 9);
  fill_uniform(model.params.head_w, static_cast<size_t>(cfg.embedding));
  fill_uniform(model.params.ood_w, static_cast<size_t>(cfg.embedding));
  fill_uniform(model.params.phi_w1, 1);
  fill_uniform(model.params.phi_w2, kPhiHidden);
  return model;
}

namespace {

// Stride-2 3x3 convolution with replicate padding (index clamping).
void conv_forward(const double* in, int in_side, int in_ch, const ConvParams& p,
                  int out_ch, double* pre) {
  const int out_side = in_side / 2;
  for (int oy = 0; oy < out_side; ++oy) {
    for (int ox = 0; ox < out_side; ++ox) {
      double* out_px = pre + (static_cast<size_t>(oy) * out_side + ox) * out_ch;
      for (int oc = 0; oc < out_ch; ++oc) out_px[oc] = p.b[static_cast<size_t>(oc)];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = std::clamp(2 * oy + ky - 1, 0, in_side - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = std::clamp(2 * ox + kx - 1, 0, in_side - 1);
          const double* iv = in + (static_cast<size_t>(iy) * in_side + ix) * in_ch;
          const double* wk = p.w.data() + static_cast<size_t>(ky * 3 + kx) * in_ch;
          const size_t oc_stride = 9 * static_cast<size_t>(in_ch);
          for (int oc = 0; oc < out_ch; ++oc) {
            const double* wv = wk + static_cast<size_t>(oc) * oc_stride;
            double s = 0.0;
            for (int ic = 0; ic < in_ch; ++ic) s += wv[ic] * iv[ic];
            out_px[oc] += s;
          }
        }
      }
    }
  }
}

// Adjoint of conv_forward. d_pre is the gradient at the pre-activations;
// d_in may be null for the first layer. Replicate padding accumulates
// border gradients onto the clamped source pixels.
void conv_backward(const double* in, int in_side, int in_ch, const ConvParams& p,
                   int out_ch, const double* d_pre, ConvParams& grad, double* d_in) {
  const int out_side = in_side / 2;
  for (int oy = 0; oy < out_side; ++oy) {
    for (int ox = 0; ox < out_side; ++ox) {
      const double* g = d_pre + (static_cast<size_t>(oy) * out_side + ox) * out_ch;
      for (int oc = 0; oc < out_ch; ++oc) grad.b[static_cast<size_t>(oc)] += g[oc];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = std::clamp(2 * oy + ky - 1, 0, in_side - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = std::clamp(2 * ox + kx - 1, 0, in_side - 1);
          const double* iv = in + (static_cast<size_t>(iy) * in_side + ix) * in_ch;
          double* dv =
              d_in ? d_in + (static_cast<size_t>(iy) * in_side + ix) * in_ch : nullptr;
          const size_t k_off = static_cast<size_t>(ky * 3 + kx) * in_ch;
          const size_t oc_stride = 9 * static_cast<size_t>(in_ch);
          for (int oc = 0; oc < out_ch; ++oc) {
            const double go = g[oc];
            if (go == 0.0) continue;
            const size_t base = static_cast<size_t>(oc) * oc_stride + k_off;
            double* dw = grad.w.data() + base;
            const double* wv = p.w.data() + base;
            if (dv) {
              for (int ic = 0; ic < in_ch; ++ic) {
                dw[ic] += go * iv[ic];
                dv[ic] += go * wv[ic];
              }
            } else {
              for (int ic = 0; ic < in_ch; ++ic) dw[ic] += go * iv[ic];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::pair<std::pair<int, int>, std::array<double, 2>> mpc_select(
    const std::vector<double>& logit_grid, int n, bool per_class_max) {
  const int cells = n * n;
  if (per_class_max) {
    std::array<int, 2> best_cell = {0, 0};
    std::array<double, 2> best = {logit_grid[0], logit_grid[1]};
    for (int cell = 1; cell < cells; ++cell) {
      for (int c = 0; c < 2; ++c) {
        const double z = logit_grid[static_cast<size_t>(cell) * 2 + static_cast<size_t>(c)];
        if (z > best[static_cast<size_t>(c)]) {
          best[static_cast<size_t>(c)] = z;
          best_cell[static_cast<size_t>(c)] = cell;
        }
      }
    }
    return {{best_cell[kAdvClass] / n, best_cell[kAdvClass] % n}, best};
  }

  int sel = 0;
  double best_margin = logit_grid[kAdvClass] - logit_grid[kRealClass];
  for (int cell = 1; cell < cells; ++cell) {
    const double margin = logit_grid[static_cast<size_t>(cell) * 2 + kAdvClass] -
                          logit_grid[static_cast<size_t>(cell) * 2 + kRealClass];
    if (margin > best_margin) {
      best_margin = margin;
      sel = cell;
    }
  }
  return {{sel / n, sel % n},
          {logit_grid[static_cast<size_t>(sel) * 2 + 0],
           logit_grid[static_cast<size_t>(sel) * 2 + 1]}};
}

std::array<double, 2> softmax2(const std::array<double, 2>& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  const double z = e0 + e1;
  return {e0 / z, e1 / z};
}

double cross_entropy(const std::array<double, 2>& logits, int label) {
  if (label != 0 && label != 1) throw Error("label must be 0 or 1");
  const double m = std::max(logits[0], logits[1]);
  const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
  return lse - logits[static_cast<size_t>(label)];
}

ForwardTrace forward_trace(const DetectorModel& model, const ImageTensor& img) {
  const DetectorConfig& cfg = model.cfg;
  if (img.height() != cfg.input_side || img.width() != cfg.input_side)
    throw DimensionError("input image side does not match detector config");

  ForwardTrace t;
  t.act[0] = build_input(cfg, img);
  int side = cfg.input_side;
  for (int l = 0; l < 4; ++l) {
    const int in_ch = layer_in_channels(cfg, l);
    const int out_ch = cfg.channels[static_cast<size_t>(l)];
    const int out_side = side / 2;
    auto& pre = t.pre[static_cast<size_t>(l)];
    pre.assign(static_cast<size_t>(out_side) * out_side * out_ch, 0.0);
    conv_forward(t.act[static_cast<size_t>(l)].data(), side, in_ch,
                 model.params.conv[static_cast<size_t>(l)], out_ch, pre.data());
    auto& act = t.act[static_cast<size_t>(l + 1)];
    act.resize(pre.size());
    for (size_t i = 0; i < pre.size(); ++i) act[i] = pre[i] > 0.0 ? pre[i] : 0.0;
    side = out_side;
  }

  const int n = cfg.grid_n();
  const int d = cfg.embedding;
  const auto& feat = t.act[4];

  t.pooled.assign(static_cast<size_t>(d), 0.0);
  for (int cell = 0; cell < n * n; ++cell)
    for (int k = 0; k < d; ++k)
      t.pooled[static_cast<size_t>(k)] += feat[static_cast<size_t>(cell) * d + k];
  for (double& v : t.pooled) v /= n * n;

  t.logit_grid.assign(static_cast<size_t>(n) * n * 2, 0.0);
  for (int cell = 0; cell < n * n; ++cell) {
    const double* f = feat.data() + static_cast<size_t>(cell) * d;
    for (int c = 0; c < 2; ++c) {
      double z = model.params.head_b[static_cast<size_t>(c)];
      const double* w = model.params.head_w.data() + static_cast<size_t>(c) * d;
      for (int k = 0; k < d; ++k) z += w[k] * f[k];
      t.logit_grid[static_cast<size_t>(cell) * 2 + static_cast<size_t>(c)] = z;
    }
  }

  if (cfg.mpc_per_class_max) {
    std::array<int, 2> best_cell = {0, 0};
    std::array<double, 2> best = {t.logit_grid[0], t.logit_grid[1]};
    for (int cell = 1; cell < n * n; ++cell)
      for (int c = 0; c < 2; ++c) {
        const double z = t.logit_grid[static_cast<size_t>(cell) * 2 + static_cast<size_t>(c)];
        if (z > best[static_cast<size_t>(c)]) {
          best[static_cast<size_t>(c)] = z;
          best_cell[static_cast<size_t>(c)] = cell;
        }
      }
    t.sel_cell = best_cell;
    t.final_logits = best;
  } else {
    const auto [cell, final_logits] = mpc_select(t.logit_grid, n, false);
    const int flat = cell.first * n + cell.second;
    t.sel_cell = {flat, flat};
    t.final_logits = final_logits;
  }
  t.probs = softmax2(t.final_logits);

  if (!cfg.mpc_per_class_max && cfg.mpc_train_temperature > 0.0) {
    const int cells = n * n;
    t.soft_w.assign(static_cast<size_t>(cells), 0.0);
    const double inv_temp = 1.0 / cfg.mpc_train_temperature;
    double max_margin = -std::numeric_limits<double>::infinity();
    for (int cell = 0; cell < cells; ++cell) {
      const double m = t.logit_grid[static_cast<size_t>(cell) * 2 + kAdvClass] -
                       t.logit_grid[static_cast<size_t>(cell) * 2 + kRealClass];
      max_margin = std::max(max_margin, m * inv_temp);
      t.soft_w[static_cast<size_t>(cell)] = m * inv_temp;
    }
    double z = 0.0;
    for (double& w : t.soft_w) {
      w = std::exp(w - max_margin);
      z += w;
    }
    for (double& w : t.soft_w) w /= z;
    t.soft_final = {0.0, 0.0};
    for (int cell = 0; cell < cells; ++cell)
      for (int c = 0; c < 2; ++c)
        t.soft_final[static_cast<size_t>(c)] +=
            t.soft_w[static_cast<size_t>(cell)] *
            t.logit_grid[static_cast<size_t>(cell) * 2 + static_cast<size_t>(c)];
  }
  return t;
}

std::pair<FeatureMap, PredictionScore> forward(const DetectorModel& model,
                                               const ImageTensor& img) {
  const ForwardTrace t = forward_trace(model, img);
  const int n = model.cfg.grid_n();

  FeatureMap map;
  map.n = n;
  map.d = model.cfg.embedding;
  map.grid = t.act[4];
  map.pooled = t.pooled;

  PredictionScore score;
  score.cell_logits = t.logit_grid;
  score.cell_row = t.sel_cell[kAdvClass] / n;
  score.cell_col = t.sel_cell[kAdvClass] % n;
  score.final_logits = t.final_logits;
  score.probs = t.probs;
  score.label = t.probs[0] >= t.probs[1] ? 0 : 1;
  return {std::move(map), std::move(score)};
}

PredictionScore predict(const DetectorModel& model, const ImageTensor& img) {
  return forward(model, img).second;
}

double adv_score(const DetectorModel& model, const ImageTensor& img) {
  return predict(model, img).probs[kAdvClass];
}

void backward_trace(const DetectorModel& model, const ForwardTrace& trace,
                    const std::array<double, 2>& d_final,
                    const std::vector<double>& d_pooled, ParamSet& grads) {
  const DetectorConfig& cfg = model.cfg;
  const int n = cfg.grid_n();
  const int d = cfg.embedding;
  const auto& feat = trace.act[4];

  std::vector<double> d_feat(feat.size(), 0.0);

  auto head_cell_grad = [&](int cell, const std::array<double, 2>& dz) {
    const double* f = feat.data() + static_cast<size_t>(cell) * d;
    double* df = d_feat.data() + static_cast<size_t>(cell) * d;
    for (int c = 0; c < 2; ++c) {
      const double g = dz[static_cast<size_t>(c)];
      if (g == 0.0) continue;
      double* dw = grads.head_w.data() + static_cast<size_t>(c) * d;
      const double* w = model.params.head_w.data() + static_cast<size_t>(c) * d;
      for (int k = 0; k < d; ++k) {
        dw[k] += g * f[k];
        df[k] += g * w[k];
      }
      grads.head_b[static_cast<size_t>(c)] += g;
    }
  };

  if (!trace.soft_w.empty()) {
    // Margin-softmax pooled head: final_j = sum_c w_c z_cj with
    // w = softmax(margin / T). Every cell receives gradient
    //   dz_c0 = w_c (g_0 + s_c / T), dz_c1 = w_c (g_1 - s_c / T)
    // where s_c = g . (z_c - soft_final).
    const double inv_temp = 1.0 / model.cfg.mpc_train_temperature;
    const int cells = n * n;
    for (int cell = 0; cell < cells; ++cell) {
      const double w = trace.soft_w[static_cast<size_t>(cell)];
      if (w == 0.0) continue;
      const double z0 = trace.logit_grid[static_cast<size_t>(cell) * 2];
      const double z1 = trace.logit_grid[static_cast<size_t>(cell) * 2 + 1];
      const double s = d_final[0] * (z0 - trace.soft_final[0]) +
                       d_final[1] * (z1 - trace.soft_final[1]);
      head_cell_grad(cell, {w * (d_final[0] + s * inv_temp),
                            w * (d_final[1] - s * inv_temp)});
    }
  } else {
    // Hard routing: gradient flows through the selected cell only
    // (per-class cells under the per-class-max variant).
    if (trace.sel_cell[0] == trace.sel_cell[1]) {
      head_cell_grad(trace.sel_cell[0], d_final);
    } else {
      head_cell_grad(trace.sel_cell[0], {d_final[0], 0.0});
      head_cell_grad(trace.sel_cell[1], {0.0, d_final[1]});
    }
  }

  // Pooled-feature path (OOD regularizer), spread uniformly over cells.
  if (!d_pooled.empty()) {
    const double inv_cells = 1.0 / (n * n);
    for (int cell = 0; cell < n * n; ++cell) {
      double* df = d_feat.data() + static_cast<size_t>(cell) * d;
      for (int k = 0; k < d; ++k) df[k] += d_pooled[static_cast<size_t>(k)] * inv_cells;
    }
  }

  // Conv stack, last block to first.
  std::vector<double> d_act = std::move(d_feat);
  for (int l = 3; l >= 0; --l) {
    const auto& pre = trace.pre[static_cast<size_t>(l)];
    std::vector<double> d_pre(pre.size());
    for (size_t i = 0; i < pre.size(); ++i) d_pre[i] = pre[i] > 0.0 ? d_act[i] : 0.0;

    const int in_side = cfg.input_side >> l;
    const int in_ch = layer_in_channels(cfg, l);
    const int out_ch = cfg.channels[static_cast<size_t>(l)];
    std::vector<double> d_in;
    if (l > 0) d_in.assign(trace.act[static_cast<size_t>(l)].size(), 0.0);
    conv_backward(trace.act[static_cast<size_t>(l)].data(), in_side, in_ch,
                  model.params.conv[static_cast<size_t>(l)], out_ch, d_pre.data(),
                  grads.conv[static_cast<size_t>(l)], l > 0 ? d_in.data() : nullptr);
    d_act = std::move(d_in);
  }
}

}  // namespace advdet
