#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "advdet/image.hpp"

namespace advdet {

// Class index convention: 0 = adversarial, 1 = real.
inline constexpr int kAdvClass = 0;
inline constexpr int kRealClass = 1;

/// Detector architecture and optimizer hyper-parameters. A fixed local
/// contrast stage turns each image into six channels [x, |x - box3(x)|];
/// four stride-2 3x3 conv + ReLU blocks then shrink input_side by 16,
/// producing an N x N grid of d-dimensional cell embeddings
/// (N = input_side / 16, d = last width).
struct DetectorConfig {
  int input_side = 64;
  std::vector<int> channels = {8, 16, 32, 32};
  int embedding = 32;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 5;
  uint64_t seed = 0;

  // Rectified high-pass input channels. Without them a from-scratch stack
  // has no first-order gradient toward small mean-zero noise and training
  // stalls at chance level in the per-epoch budget.
  bool input_local_contrast = true;

  // Margin-softmax cell weighting for the training loss (temperature of
  // the weights; 0 restores the hard selected-cell-only subgradient).
  // Inference always uses the hard argmax cell. Hard routing from a cold
  // start sends adversarial-label gradients into noise-free cells for
  // region-confined perturbations and training oscillates at chance.
  double mpc_train_temperature = 1.0;

  // Pool each class logit over cells independently instead of selecting the
  // single most-adversarial cell by margin.
  bool mpc_per_class_max = false;
  // OOD energy reads the classification head instead of its own linear head.
  bool ood_share_cls_head = false;
  // Literal scalar-linear score input (-w.u - b) instead of the energy.
  bool ood_scalar_linear = false;

  int grid_n() const { return input_side / kSideMultiple; }
  int input_channels() const { return input_local_contrast ? 6 : 3; }
  void validate() const;  // throws ConfigError
};

struct ConvParams {
  // Weight layout: w[((oc*3 + ky)*3 + kx) * in_ch + ic].
  std::vector<double> w;
  std::vector<double> b;
};

inline constexpr int kPhiHidden = 16;

/// All trainable parameters; also reused as the gradient container.
struct ParamSet {
  std::array<ConvParams, 4> conv;
  std::vector<double> head_w;  // [2][d], per-cell classification head
  std::vector<double> head_b;  // [2]
  std::vector<double> ood_w;   // [2][d], OOD linear head
  std::vector<double> ood_b;   // [2]
  std::vector<double> phi_w1;  // [16], scalar -> hidden
  std::vector<double> phi_b1;  // [16]
  std::vector<double> phi_w2;  // [16], hidden -> scalar
  std::vector<double> phi_b2;  // [1]
};

ParamSet make_param_set(const DetectorConfig& cfg);

struct ParamView {
  std::string name;
  double* data = nullptr;
  size_t size = 0;
};

// Fixed-order named views over every parameter block (used by Adam,
// checkpoints and the finite-difference harness).
std::vector<ParamView> param_views(ParamSet& p);

size_t param_count(const DetectorConfig& cfg);

struct DetectorModel {
  DetectorConfig cfg;
  ParamSet params;
  uint64_t init_seed = 0;

  size_t parameter_count() const { return param_count(cfg); }
  void check_finite() const;  // throws DivergenceError
};

/// Kaiming-uniform fan-in initialization (bound sqrt(6/fan_in)), zero
/// biases, fully determined by cfg.seed.
DetectorModel init_model(const DetectorConfig& cfg);

struct FeatureMap {
  int n = 0;
  int d = 0;
  std::vector<double> grid;    // n*n*d, cell-major
  std::vector<double> pooled;  // d, spatial mean over cells
};

struct PredictionScore {
  std::vector<double> cell_logits;  // n*n*2
  int cell_row = 0;
  int cell_col = 0;
  std::array<double, 2> final_logits{};
  std::array<double, 2> probs{};
  int label = 0;  // 0 adv, 1 real

  double adv_probability() const { return probs[kAdvClass]; }
};

/// Max-pooling cell selection: argmax over cells of z[adv] - z[real], ties
/// broken toward the smallest row-major index; returns the winning cell and
/// its logits unchanged. With per_class_max, each class logit is pooled
/// independently (the reported cell is the adv-logit argmax).
std::pair<std::pair<int, int>, std::array<double, 2>> mpc_select(
    const std::vector<double>& logit_grid, int n, bool per_class_max = false);

std::array<double, 2> softmax2(const std::array<double, 2>& logits);

/// -log softmax(logits)[label], computed in log-space.
double cross_entropy(const std::array<double, 2>& logits, int label);

/// Per-sample forward state kept for the reverse pass.
struct ForwardTrace {
  std::array<std::vector<double>, 5> act;  // act[0] = input, act[l+1] = relu out
  std::array<std::vector<double>, 4> pre;  // pre-activations
  std::vector<double> pooled;              // d
  std::vector<double> logit_grid;          // n*n*2
  std::array<int, 2> sel_cell{};           // flat cell index per class
  std::array<double, 2> final_logits{};    // hard MPC logits (inference rule)
  std::array<double, 2> probs{};
  // Margin-softmax pooled logits for the training loss (empty weights when
  // the temperature is 0 or the per-class-max variant is active).
  std::array<double, 2> soft_final{};
  std::vector<double> soft_w;  // n*n cell weights

  const std::array<double, 2>& train_logits() const {
    return soft_w.empty() ? final_logits : soft_final;
  }
};

ForwardTrace forward_trace(const DetectorModel& model, const ImageTensor& img);

std::pair<FeatureMap, PredictionScore> forward(const DetectorModel& model,
                                               const ImageTensor& img);

PredictionScore predict(const DetectorModel& model, const ImageTensor& img);

/// Adversarial probability S_cls[0]; the score consumed by evalkit.
double adv_score(const DetectorModel& model, const ImageTensor& img);

/// Reverse pass for one sample. d_final is the gradient at the selected
/// cell's two logits (routed through that cell only); d_pooled (may be
/// empty) is the gradient at the pooled feature and is spread uniformly
/// over cells. Accumulates into grads.
void backward_trace(const DetectorModel& model, const ForwardTrace& trace,
                    const std::array<double, 2>& d_final,
                    const std::vector<double>& d_pooled, ParamSet& grads);

}  // namespace advdet
