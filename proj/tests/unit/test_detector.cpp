#include <doctest.h>

#include <cmath>

#include "advdet/detector.hpp"
#include "advdet/error.hpp"
#include "advdet/ood.hpp"
#include "advdet/rng.hpp"
#include "advdet/trainer.hpp"

using namespace advdet;

namespace {

DetectorConfig small_config(uint64_t seed) {
  DetectorConfig cfg;
  cfg.input_side = 32;
  cfg.channels = {4, 8, 8, 8};
  cfg.embedding = 8;
  cfg.seed = seed;
  return cfg;
}

ImageTensor random_image(int side, uint64_t seed) {
  ImageTensor img(side, side);
  Rng rng(seed);
  for (auto& v : img.data()) v = rng.uniform01();
  return img;
}

// Loss evaluation used as the finite-difference reference; recomputes the
// combined objective through the public forward path only.
double total_loss(const DetectorModel& m, const std::vector<const ImageTensor*>& batch,
                  const std::vector<int>& labels,
                  const std::vector<std::vector<double>>* outliers, double beta) {
  double cls = 0.0;
  std::vector<std::vector<double>> pooled_real;
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto t = forward_trace(m, *batch[i]);
    cls += cross_entropy(t.train_logits(), labels[i]) / static_cast<double>(batch.size());
    if (labels[i] == kRealClass) pooled_real.push_back(t.pooled);
  }
  double unc = 0.0;
  if (outliers != nullptr && beta != 0.0 && !pooled_real.empty() && !outliers->empty()) {
    double real_term = 0.0, out_term = 0.0;
    for (const auto& x : pooled_real)
      real_term += softplus(ood_score(m, x.data())) / static_cast<double>(pooled_real.size());
    for (const auto& v : *outliers)
      out_term += softplus(-ood_score(m, v.data())) / static_cast<double>(outliers->size());
    unc = real_term + out_term;
  }
  return cls + beta * unc;
}

}  // namespace

TEST_CASE("init_model") {
  const auto cfg = small_config(9);

  SUBCASE("deterministic for a fixed seed") {
    const auto a = init_model(cfg);
    const auto b = init_model(cfg);
    auto va = param_views(const_cast<ParamSet&>(a.params));
    auto vb = param_views(const_cast<ParamSet&>(b.params));
    for (size_t i = 0; i < va.size(); ++i)
      for (size_t k = 0; k < va[i].size; ++k) CHECK(va[i].data[k] == vb[i].data[k]);
  }
  SUBCASE("all biases start at zero") {
    const auto m = init_model(cfg);
    for (const auto& conv : m.params.conv)
      for (double b : conv.b) CHECK(b == 0.0);
    for (double b : m.params.head_b) CHECK(b == 0.0);
    for (double b : m.params.ood_b) CHECK(b == 0.0);
    for (double b : m.params.phi_b1) CHECK(b == 0.0);
    CHECK(m.params.phi_b2[0] == 0.0);
  }
  SUBCASE("parameter count matches the closed form") {
    // conv: out*(9*in)+out over [6->4,4->8,8->8,8->8], heads 2*(2d+2),
    // phi 3*16+1
    const size_t expected = (4 * 9 * 6 + 4) + (8 * 9 * 4 + 8) + (8 * 9 * 8 + 8) +
                            (8 * 9 * 8 + 8) + 2 * (2 * 8 + 2) + (3 * 16 + 1);
    CHECK(param_count(cfg) == expected);
    // default config at input 64
    DetectorConfig dflt;
    const size_t expected_dflt = (8 * 9 * 6 + 8) + (16 * 9 * 8 + 16) + (32 * 9 * 16 + 32) +
                                 (32 * 9 * 32 + 32) + 2 * (2 * 32 + 2) + (3 * 16 + 1);
    CHECK(param_count(dflt) == expected_dflt);
    CHECK(init_model(dflt).parameter_count() == expected_dflt);
  }
  SUBCASE("config validation") {
    DetectorConfig bad = cfg;
    bad.embedding = 16;  // != channels.back()
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.input_side = 40;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.input_side = 16;  // N = 1
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("forward") {
  const auto cfg = small_config(11);
  const auto model = init_model(cfg);

  SUBCASE("all-zero input with zero biases gives zero logits") {
    ImageTensor zero(32, 32, 0.0);
    const auto [map, score] = forward(model, zero);
    for (double z : score.cell_logits) CHECK(z == doctest::Approx(0.0));
    CHECK(score.probs[0] == doctest::Approx(0.5));
    CHECK(score.probs[1] == doctest::Approx(0.5));
  }
  SUBCASE("spatially uniform input gives identical cell logits") {
    ImageTensor flat(32, 32, 0.37);
    const auto [map, score] = forward(model, flat);
    const int cells = cfg.grid_n() * cfg.grid_n();
    for (int c = 1; c < cells; ++c) {
      CHECK(score.cell_logits[static_cast<size_t>(c) * 2] ==
            doctest::Approx(score.cell_logits[0]).epsilon(1e-12));
      CHECK(score.cell_logits[static_cast<size_t>(c) * 2 + 1] ==
            doctest::Approx(score.cell_logits[1]).epsilon(1e-12));
    }
  }
  SUBCASE("probabilities sum to one") {
    const auto img = random_image(32, 12);
    const auto score = predict(model, img);
    CHECK(score.probs[0] + score.probs[1] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("wrong input side rejected") {
    CHECK_THROWS_AS(forward(model, ImageTensor(64, 64)), DimensionError);
  }
}

TEST_CASE("mpc_select") {
  const int n = 3;
  std::vector<double> grid(static_cast<size_t>(n) * n * 2, 0.0);

  SUBCASE("all equal selects cell (0,0)") {
    const auto [cell, logits] = mpc_select(grid, n);
    CHECK(cell.first == 0);
    CHECK(cell.second == 0);
  }
  SUBCASE("dominant adversarial cell wins") {
    for (size_t c = 0; c < 9; ++c) {
      grid[c * 2 + 0] = -10.0;
      grid[c * 2 + 1] = 10.0;
    }
    grid[5 * 2 + 0] = 10.0;
    grid[5 * 2 + 1] = -10.0;
    const auto [cell, logits] = mpc_select(grid, n);
    CHECK(cell.first * n + cell.second == 5);
    CHECK(logits[0] == 10.0);
    CHECK(logits[1] == -10.0);
  }
  SUBCASE("adding a constant to every logit changes nothing") {
    Rng rng(13);
    for (auto& z : grid) z = rng.uniform(-2, 2);
    const auto [cell_a, logits_a] = mpc_select(grid, n);
    auto shifted = grid;
    for (auto& z : shifted) z += 3.7;
    const auto [cell_b, logits_b] = mpc_select(shifted, n);
    CHECK(cell_a == cell_b);
    const auto pa = softmax2(logits_a);
    const auto pb = softmax2(logits_b);
    CHECK(pa[0] == doctest::Approx(pb[0]).epsilon(1e-12));
  }
  SUBCASE("permuting cells moves only the selected index") {
    Rng rng(14);
    for (auto& z : grid) z = rng.uniform(-2, 2);
    const auto [cell_a, logits_a] = mpc_select(grid, n);
    // rotate cells by one
    std::vector<double> rotated(grid.size());
    for (size_t c = 0; c < 9; ++c) {
      rotated[((c + 1) % 9) * 2] = grid[c * 2];
      rotated[((c + 1) % 9) * 2 + 1] = grid[c * 2 + 1];
    }
    const auto [cell_b, logits_b] = mpc_select(rotated, n);
    CHECK(logits_a[0] == logits_b[0]);
    CHECK(logits_a[1] == logits_b[1]);
    CHECK((cell_b.first * n + cell_b.second) == ((cell_a.first * n + cell_a.second) + 1) % 9);
  }
}

TEST_CASE("cross_entropy") {
  SUBCASE("uniform prediction costs ln 2") {
    CHECK(cross_entropy({0.0, 0.0}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(cross_entropy({0.0, 0.0}, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("saturated correct prediction is nearly free") {
    CHECK(cross_entropy({20.0, -20.0}, 0) < 1e-8);
  }
  SUBCASE("matches a long-double oracle on random logits") {
    Rng rng(15);
    for (int trial = 0; trial < 200; ++trial) {
      const std::array<double, 2> z = {rng.uniform(-30, 30), rng.uniform(-30, 30)};
      const int label = static_cast<int>(rng.uniform_int(0, 1));
      const long double e0 = expl(static_cast<long double>(z[0]));
      const long double e1 = expl(static_cast<long double>(z[1]));
      const long double p = (label == 0 ? e0 : e1) / (e0 + e1);
      const double expected = static_cast<double>(-logl(p));
      CHECK(cross_entropy(z, label) == doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("gradients match central finite differences") {
  auto cfg = small_config(17);
  const auto model = init_model(cfg);

  std::vector<ImageTensor> imgs;
  std::vector<int> labels;
  for (int i = 0; i < 4; ++i) {
    imgs.push_back(random_image(32, 100 + static_cast<uint64_t>(i)));
    labels.push_back(i % 2);
  }
  std::vector<const ImageTensor*> batch;
  for (auto& im : imgs) batch.push_back(&im);

  Rng orng(55);
  std::vector<std::vector<double>> outliers;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> v(8);
    for (auto& x : v) x = orng.normal();
    outliers.push_back(std::move(v));
  }
  const double beta = 0.1;

  auto analytic = compute_loss_and_grads(model, batch, labels, &outliers, beta);
  auto a_views = param_views(analytic.grads);
  auto m_views = param_views(const_cast<ParamSet&>(model.params));

  const double h = 1e-5;
  auto& mutable_model = const_cast<DetectorModel&>(model);
  for (size_t b = 0; b < m_views.size(); ++b) {
    double worst = 0.0;
    const size_t checks = std::min<size_t>(12, m_views[b].size);
    for (size_t t = 0; t < checks; ++t) {
      const size_t i = (t * 2654435761u + 13) % m_views[b].size;
      const double orig = m_views[b].data[i];
      m_views[b].data[i] = orig + h;
      const double lp = total_loss(mutable_model, batch, labels, &outliers, beta);
      m_views[b].data[i] = orig - h;
      const double lm = total_loss(mutable_model, batch, labels, &outliers, beta);
      m_views[b].data[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double an = a_views[b].data[i];
      worst = std::max(worst,
                       std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8}));
    }
    INFO("block ", m_views[b].name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gradients of untouched blocks and linearity") {
  auto cfg = small_config(19);
  const auto model = init_model(cfg);
  std::vector<ImageTensor> imgs = {random_image(32, 300), random_image(32, 301)};
  std::vector<const ImageTensor*> batch = {&imgs[0], &imgs[1]};
  const std::vector<int> labels = {0, 1};

  SUBCASE("beta 0 leaves OOD blocks at exactly zero") {
    const auto grads = backward(model, batch, labels);
    for (double g : grads.ood_w) CHECK(g == 0.0);
    for (double g : grads.ood_b) CHECK(g == 0.0);
    for (double g : grads.phi_w1) CHECK(g == 0.0);
    for (double g : grads.phi_w2) CHECK(g == 0.0);
  }
  SUBCASE("doubling the loss scale doubles every gradient") {
    Rng orng(66);
    std::vector<std::vector<double>> outliers;
    for (int i = 0; i < 4; ++i) {
      std::vector<double> v(8);
      for (auto& x : v) x = orng.normal();
      outliers.push_back(std::move(v));
    }
    auto g1 = compute_loss_and_grads(model, batch, labels, &outliers, 0.1, 1.0);
    auto g2 = compute_loss_and_grads(model, batch, labels, &outliers, 0.1, 2.0);
    auto v1 = param_views(g1.grads);
    auto v2 = param_views(g2.grads);
    for (size_t b = 0; b < v1.size(); ++b)
      for (size_t i = 0; i < v1[b].size; ++i)
        CHECK(v2[b].data[i] == doctest::Approx(2.0 * v1[b].data[i]).epsilon(1e-12));
  }
}

TEST_CASE("train_step") {
  auto cfg = small_config(23);
  cfg.learning_rate = 1e-3;

  std::vector<ImageTensor> imgs;
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) {
    imgs.push_back(random_image(32, 400 + static_cast<uint64_t>(i)));
    labels.push_back(i % 2);
  }
  std::vector<const ImageTensor*> batch;
  for (auto& im : imgs) batch.push_back(&im);

  SUBCASE("beta 0 reduces to classification-only training") {
    auto model = init_model(cfg);
    AdamState adam(cfg);
    const auto ood_before = model.params.ood_w;
    const auto phi_before = model.params.phi_w1;
    const auto loss = train_step(model, batch, labels, nullptr, 0.0, adam, nullptr);
    CHECK(loss.uncertainty == 0.0);
    CHECK(model.params.ood_w == ood_before);  // zero gradient, zero Adam moments
    CHECK(model.params.phi_w1 == phi_before);
  }
  SUBCASE("loss decreases when overfitting one small batch") {
    auto model = init_model(cfg);
    AdamState adam(cfg);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 50; ++step) {
      const auto loss = train_step(model, batch, labels, nullptr, 0.0, adam, nullptr);
      if (step == 0) first = loss.cls;
      last = loss.cls;
    }
    CHECK(last < first);
    CHECK(last < 0.45);
  }
  SUBCASE("parameters stay finite and training is deterministic") {
    auto m1 = init_model(cfg);
    auto m2 = init_model(cfg);
    AdamState a1(cfg), a2(cfg);
    for (int step = 0; step < 5; ++step) {
      train_step(m1, batch, labels, nullptr, 0.0, a1, nullptr);
      train_step(m2, batch, labels, nullptr, 0.0, a2, nullptr);
    }
    m1.check_finite();
    auto v1 = param_views(m1.params);
    auto v2 = param_views(m2.params);
    for (size_t b = 0; b < v1.size(); ++b)
      for (size_t i = 0; i < v1[b].size; ++i) CHECK(v1[b].data[i] == v2[b].data[i]);
  }
}

TEST_CASE("predict conventions") {
  const auto cfg = small_config(29);
  const auto model = init_model(cfg);

  SUBCASE("exact tie breaks toward label 0") {
    ImageTensor zero(32, 32, 0.0);
    const auto score = predict(model, zero);  // zero logits -> (0.5, 0.5)
    CHECK(score.label == 0);
  }
  SUBCASE("score is the adversarial probability") {
    const auto img = random_image(32, 31);
    const auto score = predict(model, img);
    CHECK(adv_score(model, img) == score.probs[kAdvClass]);
    CHECK(score.adv_probability() == score.probs[0]);
  }
}

TEST_CASE("per-class max variant") {
  auto cfg = small_config(37);
  cfg.mpc_per_class_max = true;
  const auto model = init_model(cfg);
  const auto img = random_image(32, 41);
  const auto [map, score] = forward(model, img);
  // final logits are the per-class maxima of the cell grid
  const int cells = cfg.grid_n() * cfg.grid_n();
  std::array<double, 2> expected = {-1e30, -1e30};
  for (int c = 0; c < cells; ++c)
    for (int k = 0; k < 2; ++k)
      expected[static_cast<size_t>(k)] = std::max(
          expected[static_cast<size_t>(k)],
          score.cell_logits[static_cast<size_t>(c) * 2 + static_cast<size_t>(k)]);
  CHECK(score.final_logits[0] == expected[0]);
  CHECK(score.final_logits[1] == expected[1]);
}
