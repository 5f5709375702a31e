#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occ/augment.hpp"
#include "occ/network.hpp"
#include "occ/tensor.hpp"

namespace occ {

enum class KernelKind { linear, rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  double gamma = 1.0;  // rbf only: k(x,y) = exp(-gamma * ||x-y||^2)
};

double kernel_eval(const KernelSpec& spec, const double* x, const double* y, std::size_t d);

// gamma = 10 / (d * Var(reps)). Var pools all n*d values by default; the
// per_dim flag averages per-dimension variances instead. Errors on constant
// representations.
double default_gamma(const Tensor& reps, bool per_dim = false);

struct OcsvmOptions {
  double kkt_tol = 1e-6;
  std::uint64_t max_pair_updates = 1000000;
  std::size_t cache_limit = 10000;  // full kernel matrix below this n
};

struct OcsvmSolveInfo {
  std::uint64_t pair_updates = 0;
  double kkt_residual = 0.0;
  double dual_objective = 0.0;  // 0.5 * alpha' K alpha at the solution
};

// Support vectors with their dual coefficients. Decision score
// s(x) = sum_i alpha_i k(x_i, x) - rho; higher is more normal, boundary at 0.
struct OcsvmModel {
  Tensor support_vectors;       // [s x d]
  std::vector<double> alphas;   // s positive entries
  double rho = 0.0;
  KernelSpec kernel;
  double nu = 0.5;
  OcsvmSolveInfo info;
};

// Solves the dual (minimize 0.5 a'Ka, sum a = 1, 0 <= a <= 1/(nu n)) by
// maximal-violating-pair SMO to the configured KKT tolerance.
OcsvmModel fit_ocsvm(const Tensor& reps, double nu, const KernelSpec& kernel,
                     const OcsvmOptions& opts = {});
std::vector<double> score_ocsvm(const OcsvmModel& model, const Tensor& queries);

struct KdeModel {
  Tensor references;  // [n x d]
  double gamma = 1.0;
};

// gamma <= 0 selects the default_gamma heuristic.
KdeModel fit_kde(const Tensor& reps, double gamma = 0.0);
// log of (1/gamma) sum_i exp(-gamma ||x - r_i||^2), via log-sum-exp
std::vector<double> score_kde(const KdeModel& model, const Tensor& queries);
// d(log score)/d(query) for a single query row
std::vector<double> kde_log_score_gradient(const KdeModel& model, const double* query,
                                           std::size_t d);

struct GdeModel {
  Tensor mean;      // [d]
  Tensor chol;      // lower-triangular [d x d] factor of Sigma + ridge*I
  double log_det = 0.0;
};

// MLE covariance (divide by n) with ridge 1e-6, escalated on Cholesky failure.
GdeModel fit_gde(const Tensor& reps);
// full log-density -0.5 * (d ln 2pi + ln det + Mahalanobis^2)
std::vector<double> score_gde(const GdeModel& model, const Tensor& queries);

enum class SurrogateVariant { zero_only, sum_all };

// Normality scores read off the rotation classifier itself: the probability
// of "not rotated", or the sum over y of p(y | rot90(x, y)).
std::vector<double> rotation_surrogate_score(const ModelBundle& model, const ImageBatch& x,
                                             SurrogateVariant variant);

enum class DetectorKind : std::uint8_t { ocsvm = 1, kde = 2, gde = 3 };

std::string detector_kind_name(DetectorKind k);
DetectorKind detector_kind_from_name(const std::string& name);

// Tagged union of the fitted shallow detectors, scoring representations.
struct Detector {
  DetectorKind kind = DetectorKind::kde;
  OcsvmModel ocsvm;
  KdeModel kde;
  GdeModel gde;

  std::vector<double> score(const Tensor& queries) const;
};

Detector fit_detector(DetectorKind kind, const Tensor& reps, double nu,
                      const KernelSpec& kernel);

// Detector file: magic "OCD1", u16 version, kind tag, kernel spec, payload
// tensors, CRC32 trailer.
void save_detector(const Detector& det, const std::string& path);
Detector load_detector(const std::string& path);

}  // namespace occ
