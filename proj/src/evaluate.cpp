#include "occ/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "occ/rng.hpp"

namespace occ {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

double auc(const ScoredSet& set) {
  require(set.scores.size() == set.labels.size(), "auc: scores/labels length mismatch");
  std::size_t n = set.scores.size();
  std::size_t n_in = 0;
  for (bool b : set.labels) n_in += b ? 1 : 0;
  std::size_t n_out = n - n_in;
  require(n_in > 0 && n_out > 0, "auc: both classes must be present");

  // average ranks (1-based); rank sum of inliers gives the U statistic
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (set.labels[k]) rank_sum += rank[k];
  double u = rank_sum - 0.5 * static_cast<double>(n_in) * static_cast<double>(n_in + 1);
  return u / (static_cast<double>(n_in) * static_cast<double>(n_out));
}

namespace {

double median_pairwise_distance(const Tensor& pooled) {
  std::size_t n = pooled.rows(), d = pooled.cols();
  std::vector<double> dist;
  dist.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        double c = pooled.at(i, k) - pooled.at(j, k);
        s += c * c;
      }
      dist.push_back(std::sqrt(s));
    }
  std::sort(dist.begin(), dist.end());
  double med = dist.empty() ? 0.0 : dist[dist.size() / 2];
  return med > 1e-12 ? med : 1.0;  // degenerate pooled sample
}

double gauss_kernel(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j,
                    double inv_two_sigma2) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    double c = a.at(i, k) - b.at(j, k);
    s += c * c;
  }
  return std::exp(-s * inv_two_sigma2);
}

}  // namespace

double mmd_squared(const Tensor& x, const Tensor& y, const MmdConfig& config) {
  require(x.rank() == 2 && y.rank() == 2 && x.cols() == y.cols(),
          "mmd: samples must be [n x d] with matching d");
  std::size_t m = x.rows(), n = y.rows();
  require(m >= 1 && n >= 1, "mmd: empty sample");
  if (config.estimator == MmdEstimator::unbiased)
    require(m >= 2 && n >= 2, "mmd: unbiased estimator needs at least 2 points per sample");

  double sigma = config.sigma;
  if (config.bandwidth_rule == MmdBandwidthRule::median) {
    Tensor pooled({m + n, x.cols()});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < x.cols(); ++k) pooled.at(i, k) = x.at(i, k);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < x.cols(); ++k) pooled.at(m + j, k) = y.at(j, k);
    sigma = median_pairwise_distance(pooled);
  }
  require(sigma > 0.0, "mmd: bandwidth must be positive");
  double inv = 1.0 / (2.0 * sigma * sigma);

  // identical summation order for the three blocks keeps X==Y exactly zero
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (config.estimator == MmdEstimator::biased || i != j)
        kxx += gauss_kernel(x, i, x, j, inv);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (config.estimator == MmdEstimator::biased || i != j)
        kyy += gauss_kernel(y, i, y, j, inv);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) kxy += gauss_kernel(x, i, y, j, inv);

  double mm = static_cast<double>(m), nn = static_cast<double>(n);
  if (config.estimator == MmdEstimator::biased)
    return kxx / (mm * mm) + kyy / (nn * nn) - 2.0 * kxy / (mm * nn);
  return kxx / (mm * (mm - 1.0)) + kyy / (nn * (nn - 1.0)) - 2.0 * kxy / (mm * nn);
}

Tensor sample_uniform_sphere(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "uniform-sphere"));
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out.at(i, j) = rng.normal();
      norm2 += out.at(i, j) * out.at(i, j);
    }
    double inv = 1.0 / std::sqrt(std::max(norm2, 1e-300));
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) *= inv;
  }
  return out;
}

double mmd_to_uniform(const Tensor& reps, const MmdConfig& config) {
  require(reps.rank() == 2 && reps.rows() >= 2, "mmd_to_uniform: need [n x d], n >= 2");
  require(reps.cols() >= 2, "mmd_to_uniform: dimension must be at least 2");
  std::size_t n = reps.rows(), d = reps.cols();
  Tensor unit({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm2 += reps.at(i, j) * reps.at(i, j);
    double denom = std::sqrt(norm2);
    if (denom < 1e-12) denom = 1e-12;
    for (std::size_t j = 0; j < d; ++j) unit.at(i, j) = reps.at(i, j) / denom;
  }
  Tensor uniform = sample_uniform_sphere(config.uniform_samples, d, config.seed);
  return mmd_squared(unit, uniform, config);
}

std::vector<double> ensemble_scores(const std::vector<std::vector<double>>& score_vectors,
                                    EnsembleNormalization normalization) {
  require(!score_vectors.empty(), "ensemble_scores: need at least one score array");
  std::size_t n = score_vectors.front().size();
  for (const auto& v : score_vectors)
    require(v.size() == n, "ensemble_scores: score arrays have different lengths");

  std::vector<double> out(n, 0.0);
  for (const auto& v : score_vectors) {
    if (normalization == EnsembleNormalization::zscore) {
      double mu = mean_of(v);
      double sd = stddev_of(v);
      if (sd > 0.0)
        for (std::size_t i = 0; i < n; ++i) out[i] += (v[i] - mu) / sd;
      // zero-std arrays contribute zeros
    } else {
      for (std::size_t i = 0; i < n; ++i) out[i] += v[i];
    }
  }
  for (double& v : out) v /= static_cast<double>(score_vectors.size());
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace occ
