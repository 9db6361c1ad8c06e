#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "advdet/image.hpp"
#include "advdet/rng.hpp"

namespace advdet {

/// One scored example: score is the adversarial probability S_cls[0];
/// true_label: 0 adversarial, 1 real.
struct ScoredSample {
  double score = 0.0;
  int true_label = 0;
  std::string source;
};

/// Rank-based (Mann-Whitney) AUC with the adversarial class as positive;
/// ties contribute 1/2. Throws MetricError on single-class input.
double auc(const std::vector<ScoredSample>& samples);

/// Fraction correctly classified by "score >= threshold => adversarial".
double accuracy_at(const std::vector<ScoredSample>& samples, double threshold = 0.5);

struct ClusterReport {
  int k = 0;
  int iterations = 0;
  std::vector<double> inertia_trace;  // one entry per assignment step
  std::vector<size_t> sizes;
  // Per cluster: fraction of each source tag among its members (sums to 1).
  std::vector<std::map<std::string, double>> composition;
  std::vector<int> assignments;
  std::vector<std::string> tags;
};

/// k-means++ / Lloyd clustering of noise fields. Each field is featurized
/// as the area-downsampled log-compressed offset magnitude
/// log(1 + 255 |v|), downsample_side^2 * 3 values: signed offsets are
/// mean-zero, which makes raw-offset families concentric and inseparable
/// for Euclidean k-means, and the log flattens the multiplicative spread
/// of patch-style noise. Runs 10 seeded restarts and keeps the lowest
/// final inertia. Deterministic given the rng seed.
inline constexpr int kKmeansRestarts = 10;

ClusterReport kmeans_noise(const std::vector<PerturbationField>& noise_fields,
                           const std::vector<std::string>& tags, int k,
                           int downsample_side, Rng& rng);

/// Max-match purity: sum over clusters of the dominant tag count, over n.
double cluster_purity(const ClusterReport& report);

/// Box-filter (area mean) resample of a field to side x side x 3.
std::vector<double> downsample_area(const PerturbationField& field, int side);

struct CrossMatrix {
  std::vector<std::string> train_tags;
  std::vector<std::string> test_tags;
  std::vector<std::vector<double>> auc;  // [train][test]
};

/// For each train tag the runner returns one scored sample set per test
/// tag; cells hold the AUC of each set.
using CrossRowRunner =
    std::function<std::vector<std::vector<ScoredSample>>(const std::string& train_tag)>;

CrossMatrix cross_matrix(const std::vector<std::string>& train_tags,
                         const std::vector<std::string>& test_tags,
                         const CrossRowRunner& runner);

/// cross_matrix with perturbation magnitudes as the swept axis.
CrossMatrix eps_cross(const std::vector<double>& train_eps,
                      const std::vector<double>& test_eps, const CrossRowRunner& runner);

std::string format_eps_tag(double eps);

nlohmann::json matrix_to_json(const CrossMatrix& m, const std::string& kind);
std::string matrix_to_csv(const CrossMatrix& m);
std::string matrix_to_text(const CrossMatrix& m, const std::string& title);

nlohmann::json cluster_report_to_json(const ClusterReport& report);

}  // namespace advdet
