#pragma once

#include <cstdint>
#include <vector>

#include "occ/tensor.hpp"

namespace occ {

// Normality scores (higher = more normal) with inlier/outlier labels.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<bool> labels;  // true = inlier
};

// Mann-Whitney AUC with average-rank tie handling:
// P(score_in > score_out) + 0.5 P(equal). Errors when a class is missing.
double auc(const ScoredSet& set);

enum class MmdEstimator { biased, unbiased };
enum class MmdBandwidthRule { median, fixed };

struct MmdConfig {
  MmdBandwidthRule bandwidth_rule = MmdBandwidthRule::median;
  double sigma = 1.0;  // used by the fixed rule
  MmdEstimator estimator = MmdEstimator::biased;
  std::size_t uniform_samples = 256;
  std::uint64_t seed = 0;
};

// Squared MMD between two samples under a Gaussian kernel
// k(x,y) = exp(-||x-y||^2 / (2 sigma^2)); median-heuristic bandwidth on the
// pooled sample by default. The biased V-statistic of a sample with itself is
// exactly zero.
double mmd_squared(const Tensor& x, const Tensor& y, const MmdConfig& config);

// L2-normalizes the representations and compares them against fresh uniform
// draws on the unit hypersphere S^{d-1}.
double mmd_to_uniform(const Tensor& reps, const MmdConfig& config);

// standard-normal rows normalized to unit length
Tensor sample_uniform_sphere(std::size_t n, std::size_t d, std::uint64_t seed);

enum class EnsembleNormalization { zscore, none };

// Elementwise mean of the score arrays, each standardized over the evaluation
// set first under zscore (zero-std arrays pass through as zeros).
std::vector<double> ensemble_scores(const std::vector<std::vector<double>>& score_vectors,
                                    EnsembleNormalization normalization);

double mean_of(const std::vector<double>& v);
double stddev_of(const std::vector<double>& v);  // population

}  // namespace occ
