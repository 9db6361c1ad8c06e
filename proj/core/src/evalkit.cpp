#include "advdet/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "advdet/error.hpp"
#include "advdet/version.hpp"

namespace advdet {

double auc(const std::vector<ScoredSample>& samples) {
  size_t n_pos = 0, n_neg = 0;
  for (const auto& s : samples) {
    if (s.true_label == 0)
      ++n_pos;  // adversarial = positive
    else
      ++n_neg;
  }
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("AUC undefined: need both classes present");

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return samples[a].score < samples[b].score; });

  // Average ranks over tie groups, then the Mann-Whitney U statistic.
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t t = i; t < j; ++t)
      if (samples[order[t]].true_label == 0) pos_rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double accuracy_at(const std::vector<ScoredSample>& samples, double threshold) {
  if (samples.empty()) throw MetricError("accuracy undefined on empty input");
  size_t correct = 0;
  for (const auto& s : samples) {
    const int predicted = s.score >= threshold ? 0 : 1;
    correct += predicted == s.true_label;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::vector<double> downsample_area(const PerturbationField& field, int side) {
  if (side < 1) throw ConfigError("downsample side must be >= 1");
  std::vector<double> out(static_cast<size_t>(side) * side * 3, 0.0);
  const double sy = static_cast<double>(field.height) / side;
  const double sx = static_cast<double>(field.width) / side;
  for (int ty = 0; ty < side; ++ty) {
    const double y0 = ty * sy, y1 = (ty + 1) * sy;
    for (int tx = 0; tx < side; ++tx) {
      const double x0 = tx * sx, x1 = (tx + 1) * sx;
      double acc[3] = {0.0, 0.0, 0.0};
      double area = 0.0;
      for (int y = static_cast<int>(std::floor(y0)); y < static_cast<int>(std::ceil(y1)); ++y) {
        const double wy =
            std::min(y1, static_cast<double>(y + 1)) - std::max(y0, static_cast<double>(y));
        if (wy <= 0.0 || y < 0 || y >= field.height) continue;
        for (int x = static_cast<int>(std::floor(x0)); x < static_cast<int>(std::ceil(x1)); ++x) {
          const double wx =
              std::min(x1, static_cast<double>(x + 1)) - std::max(x0, static_cast<double>(x));
          if (wx <= 0.0 || x < 0 || x >= field.width) continue;
          const double w = wy * wx;
          for (int c = 0; c < 3; ++c) acc[c] += w * field.at(y, x, c);
          area += w;
        }
      }
      for (int c = 0; c < 3; ++c)
        out[(static_cast<size_t>(ty) * side + tx) * 3 + static_cast<size_t>(c)] =
            area > 0.0 ? acc[c] / area : 0.0;
    }
  }
  return out;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

namespace {

ClusterReport lloyd_run(const std::vector<std::vector<double>>& points,
                        const std::vector<std::string>& tags, int k, Rng& rng) {
  const size_t n = points.size();

  // k-means++ seeding.
  std::vector<std::vector<double>> centers;
  centers.reserve(static_cast<size_t>(k));
  centers.push_back(points[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n) - 1))]);
  std::vector<double> d2(n);
  while (centers.size() < static_cast<size_t>(k)) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
      total += best;
    }
    size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform01() * total;
      double acc = 0.0;
      pick = n - 1;
      for (size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n) - 1));
    }
    centers.push_back(points[pick]);
  }

  ClusterReport report;
  report.k = k;
  report.tags = tags;
  report.assignments.assign(n, -1);

  constexpr int kMaxIterations = 300;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    // Assignment step; the inertia trace records the cost of each
    // assignment under the centers used to make it, which Lloyd's
    // alternation keeps non-increasing.
    bool changed = false;
    double inertia = 0.0;
    for (size_t i = 0; i < n; ++i) {
      int best_c = 0;
      double best = sq_dist(points[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        const double dist = sq_dist(points[i], centers[static_cast<size_t>(c)]);
        if (dist < best) {
          best = dist;
          best_c = c;
        }
      }
      inertia += best;
      if (report.assignments[i] != best_c) {
        report.assignments[i] = best_c;
        changed = true;
      }
    }
    report.inertia_trace.push_back(inertia);
    report.iterations = iter + 1;
    if (!changed && iter > 0) break;

    // Update step.
    std::vector<size_t> counts(static_cast<size_t>(k), 0);
    std::vector<std::vector<double>> sums(static_cast<size_t>(k),
                                          std::vector<double>(points[0].size(), 0.0));
    for (size_t i = 0; i < n; ++i) {
      const auto c = static_cast<size_t>(report.assignments[i]);
      counts[c] += 1;
      for (size_t j = 0; j < points[i].size(); ++j) sums[c][j] += points[i][j];
    }
    for (int c = 0; c < k; ++c) {
      const auto cc = static_cast<size_t>(c);
      if (counts[cc] == 0) {
        // Deterministic empty-cluster fix: steal the point farthest from
        // its current center (lowest index on ties).
        size_t far_i = 0;
        double far_d = -1.0;
        for (size_t i = 0; i < n; ++i) {
          const double dist =
              sq_dist(points[i], centers[static_cast<size_t>(report.assignments[i])]);
          if (dist > far_d) {
            far_d = dist;
            far_i = i;
          }
        }
        centers[cc] = points[far_i];
        continue;
      }
      for (size_t j = 0; j < sums[cc].size(); ++j)
        centers[cc][j] = sums[cc][j] / static_cast<double>(counts[cc]);
    }
  }

  report.sizes.assign(static_cast<size_t>(k), 0);
  std::vector<std::map<std::string, size_t>> tag_counts(static_cast<size_t>(k));
  for (size_t i = 0; i < n; ++i) {
    const auto c = static_cast<size_t>(report.assignments[i]);
    report.sizes[c] += 1;
    tag_counts[c][tags[i]] += 1;
  }
  report.composition.resize(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c) {
    const auto cc = static_cast<size_t>(c);
    for (const auto& [tag, cnt] : tag_counts[cc])
      report.composition[cc][tag] =
          static_cast<double>(cnt) / static_cast<double>(report.sizes[cc]);
  }
  return report;
}

}  // namespace

ClusterReport kmeans_noise(const std::vector<PerturbationField>& noise_fields,
                           const std::vector<std::string>& tags, int k,
                           int downsample_side, Rng& rng) {
  const size_t n = noise_fields.size();
  if (n != tags.size()) throw DimensionError("tags must match noise fields");
  if (k < 1 || static_cast<size_t>(k) > n)
    throw InsufficientDataError("K must satisfy 1 <= K <= sample count");

  std::vector<std::vector<double>> points(n);
  for (size_t i = 0; i < n; ++i) {
    PerturbationField mag = noise_fields[i];
    for (double& v : mag.data) v = std::log1p(std::fabs(v) * 255.0);
    points[i] = downsample_area(mag, downsample_side);
  }

  // Restarts guard against k-means++ local minima; lowest inertia wins.
  ClusterReport best;
  double best_inertia = std::numeric_limits<double>::infinity();
  const uint64_t restart_base = rng.next_u64();
  for (int restart = 0; restart < kKmeansRestarts; ++restart) {
    Rng sub(derive_seed(restart_base, static_cast<uint64_t>(restart)));
    ClusterReport candidate = lloyd_run(points, tags, k, sub);
    if (candidate.inertia_trace.back() < best_inertia) {
      best_inertia = candidate.inertia_trace.back();
      best = std::move(candidate);
    }
  }
  return best;
}

double cluster_purity(const ClusterReport& report) {
  if (report.assignments.empty()) throw MetricError("purity undefined on empty clustering");
  std::vector<std::map<std::string, size_t>> tag_counts(static_cast<size_t>(report.k));
  for (size_t i = 0; i < report.assignments.size(); ++i)
    tag_counts[static_cast<size_t>(report.assignments[i])][report.tags[i]] += 1;
  size_t dominant = 0;
  for (const auto& counts : tag_counts) {
    size_t best = 0;
    for (const auto& [tag, cnt] : counts) best = std::max(best, cnt);
    dominant += best;
  }
  return static_cast<double>(dominant) / static_cast<double>(report.assignments.size());
}

CrossMatrix cross_matrix(const std::vector<std::string>& train_tags,
                         const std::vector<std::string>& test_tags,
                         const CrossRowRunner& runner) {
  if (train_tags.empty() || test_tags.empty())
    throw ConfigError("cross matrix needs nonempty tag lists");
  CrossMatrix m;
  m.train_tags = train_tags;
  m.test_tags = test_tags;
  for (const auto& train_tag : train_tags) {
    const auto rows = runner(train_tag);
    if (rows.size() != test_tags.size())
      throw DimensionError("runner returned wrong number of test sets");
    std::vector<double> row;
    row.reserve(rows.size());
    for (const auto& samples : rows) row.push_back(auc(samples));
    m.auc.push_back(std::move(row));
  }
  return m;
}

std::string format_eps_tag(double eps) {
  std::ostringstream ss;
  ss << "eps" << eps;
  return ss.str();
}

CrossMatrix eps_cross(const std::vector<double>& train_eps,
                      const std::vector<double>& test_eps, const CrossRowRunner& runner) {
  std::vector<std::string> train_tags, test_tags;
  for (double e : train_eps) train_tags.push_back(format_eps_tag(e));
  for (double e : test_eps) test_tags.push_back(format_eps_tag(e));
  return cross_matrix(train_tags, test_tags, runner);
}

nlohmann::json matrix_to_json(const CrossMatrix& m, const std::string& kind) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["kind"] = kind;
  j["train_tags"] = m.train_tags;
  j["test_tags"] = m.test_tags;
  j["auc"] = m.auc;
  return j;
}

std::string matrix_to_csv(const CrossMatrix& m) {
  std::ostringstream ss;
  ss << "train\\test";
  for (const auto& t : m.test_tags) ss << "," << t;
  ss << "\n";
  for (size_t r = 0; r < m.train_tags.size(); ++r) {
    ss << m.train_tags[r];
    for (double v : m.auc[r]) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      ss << "," << buf;
    }
    ss << "\n";
  }
  return ss.str();
}

std::string matrix_to_text(const CrossMatrix& m, const std::string& title) {
  size_t width = 10;
  for (const auto& t : m.train_tags) width = std::max(width, t.size() + 2);
  for (const auto& t : m.test_tags) width = std::max(width, t.size() + 2);

  std::ostringstream ss;
  ss << title << "\n";
  ss << std::string(width, ' ');
  for (const auto& t : m.test_tags) {
    ss << std::string(width - t.size(), ' ') << t;
  }
  ss << "\n";
  for (size_t r = 0; r < m.train_tags.size(); ++r) {
    const auto& tag = m.train_tags[r];
    ss << tag << std::string(width - tag.size(), ' ');
    for (double v : m.auc[r]) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%*.4f", static_cast<int>(width), v);
      ss << buf;
    }
    ss << "\n";
  }
  return ss.str();
}

nlohmann::json cluster_report_to_json(const ClusterReport& report) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["kind"] = "kmeans_noise";
  j["k"] = report.k;
  j["iterations"] = report.iterations;
  j["inertia_trace"] = report.inertia_trace;
  j["sizes"] = report.sizes;
  j["purity"] = cluster_purity(report);
  auto& comp = j["clusters"];
  comp = nlohmann::json::array();
  for (size_t c = 0; c < report.composition.size(); ++c) {
    nlohmann::json jc;
    jc["size"] = report.sizes[c];
    jc["composition"] = report.composition[c];
    comp.push_back(jc);
  }
  j["assignments"] = report.assignments;
  return j;
}

}  // namespace advdet
