#include "occ/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "occ/serialize.hpp"

namespace occ {

namespace {

constexpr std::uint16_t kDetectorVersion = 1;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double sq_dist(const double* x, const double* y, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double c = x[i] - y[i];
    s += c * c;
  }
  return s;
}

}  // namespace

double kernel_eval(const KernelSpec& spec, const double* x, const double* y, std::size_t d) {
  if (spec.kind == KernelKind::linear) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += x[i] * y[i];
    return s;
  }
  return std::exp(-spec.gamma * sq_dist(x, y, d));
}

double default_gamma(const Tensor& reps, bool per_dim) {
  require(reps.rank() == 2, "default_gamma: expected [n x d] representations");
  std::size_t n = reps.rows(), d = reps.cols();
  require(n >= 2, "default_gamma: need at least 2 rows");
  double var = 0.0;
  if (!per_dim) {
    // population variance pooled over all n*d values
    double mean = 0.0;
    for (std::size_t i = 0; i < reps.size(); ++i) mean += reps[i];
    mean /= static_cast<double>(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) {
      double c = reps[i] - mean;
      var += c * c;
    }
    var /= static_cast<double>(reps.size());
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += reps.at(i, j);
      mean /= static_cast<double>(n);
      double vj = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double c = reps.at(i, j) - mean;
        vj += c * c;
      }
      var += vj / static_cast<double>(n);
    }
    var /= static_cast<double>(d);
  }
  if (var <= 0.0 || !std::isfinite(var))
    throw std::invalid_argument("default_gamma: representations have zero variance");
  return 10.0 / (static_cast<double>(d) * var);
}

namespace {

// Kernel matrix access, cached in full below the cache limit and evaluated on
// the fly above it.
class KernelMatrix {
 public:
  KernelMatrix(const Tensor& x, const KernelSpec& spec, std::size_t cache_limit)
      : x_(x), spec_(spec), n_(x.rows()), d_(x.cols()) {
    if (n_ <= cache_limit) {
      cache_.assign(n_ * n_, 0.0);
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i; j < n_; ++j) {
          double v = kernel_eval(spec_, row(i), row(j), d_);
          cache_[i * n_ + j] = v;
          cache_[j * n_ + i] = v;
        }
      cached_ = true;
    }
  }

  double at(std::size_t i, std::size_t j) const {
    if (cached_) return cache_[i * n_ + j];
    return kernel_eval(spec_, row(i), row(j), d_);
  }

 private:
  const double* row(std::size_t i) const { return x_.data().data() + i * d_; }
  const Tensor& x_;
  KernelSpec spec_;
  std::size_t n_, d_;
  std::vector<double> cache_;
  bool cached_ = false;
};

}  // namespace

OcsvmModel fit_ocsvm(const Tensor& reps, double nu, const KernelSpec& kernel,
                     const OcsvmOptions& opts) {
  require(reps.rank() == 2, "fit_ocsvm: expected [n x d] representations");
  std::size_t n = reps.rows(), d = reps.cols();
  require(n >= 2, "fit_ocsvm: need at least 2 training points");
  require(nu > 0.0 && nu <= 1.0, "fit_ocsvm: nu must be in (0, 1]");
  require(nu * static_cast<double>(n) >= 1.0,
          "fit_ocsvm: nu * n < 1 makes the box-constrained simplex infeasible");

  double C = 1.0 / (nu * static_cast<double>(n));
  KernelMatrix K(reps, kernel, opts.cache_limit);

  // feasible start: floor(nu*n) coefficients at the upper bound, one fractional
  std::vector<double> alpha(n, 0.0);
  {
    double remaining = 1.0;
    for (std::size_t i = 0; i < n && remaining > 0.0; ++i) {
      double a = std::min(C, remaining);
      alpha[i] = a;
      remaining -= a;
    }
  }
  std::vector<double> grad(n, 0.0);  // grad_i = (K alpha)_i
  auto refresh_grad = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (alpha[j] > 0.0) acc += K.at(i, j) * alpha[j];
      grad[i] = acc;
    }
  };
  refresh_grad();

  OcsvmSolveInfo info;
  // incremental gradient updates drift over long runs; refresh periodically
  // and always re-verify convergence on a freshly computed gradient
  std::uint64_t refresh_every = std::max<std::uint64_t>(4 * n, 256);
  std::uint64_t since_refresh = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (true) {
    if (since_refresh >= refresh_every) {
      refresh_grad();
      since_refresh = 0;
    }
    // maximal violating pair: smallest gradient among raisable coefficients,
    // largest among reducible ones
    std::size_t up = n, dn = n;
    double up_val = std::numeric_limits<double>::infinity();
    double dn_val = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] < C && grad[i] < up_val) {
        up_val = grad[i];
        up = i;
      }
      if (alpha[i] > 0.0 && grad[i] > dn_val) {
        dn_val = grad[i];
        dn = i;
      }
    }
    residual = (up == n || dn == n) ? 0.0 : dn_val - up_val;
    if (residual < opts.kkt_tol) {
      if (since_refresh == 0) break;
      refresh_grad();  // confirm on the exact gradient before accepting
      since_refresh = 0;
      continue;
    }
    if (info.pair_updates >= opts.max_pair_updates)
      throw std::runtime_error("fit_ocsvm: no convergence after " +
                               std::to_string(opts.max_pair_updates) +
                               " pair updates, KKT residual " + std::to_string(residual));

    double eta = K.at(up, up) + K.at(dn, dn) - 2.0 * K.at(up, dn);
    double delta = (eta > 1e-15) ? (dn_val - up_val) / eta
                                 : std::numeric_limits<double>::infinity();
    delta = std::min(delta, C - alpha[up]);
    delta = std::min(delta, alpha[dn]);

    double a_up_new = std::min(alpha[up] + delta, C);
    double applied = a_up_new - alpha[up];
    alpha[up] = a_up_new;
    alpha[dn] = std::max(alpha[dn] - applied, 0.0);
    // snap bound dust so a coefficient cannot pin the working pair with a
    // subnormal movable mass
    double snap = 1e-12 * C;
    if (alpha[up] > C - snap) alpha[up] = C;
    if (alpha[dn] < snap) alpha[dn] = 0.0;

    for (std::size_t t = 0; t < n; ++t) grad[t] += applied * (K.at(t, up) - K.at(t, dn));
    ++info.pair_updates;
    ++since_refresh;
  }
  info.kkt_residual = residual;

  // rho: mean decision value over unbounded support vectors, midpoint of the
  // KKT interval when none exist
  double free_tol = 1e-8 * C;
  double rho = 0.0;
  std::size_t n_free = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > free_tol && alpha[i] < C - free_tol) {
      rho += grad[i];
      ++n_free;
    }
  }
  if (n_free > 0) {
    rho /= static_cast<double>(n_free);
  } else {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] > 0.0) lo = std::max(lo, grad[i]);
      if (alpha[i] < C) hi = std::min(hi, grad[i]);
    }
    if (!std::isfinite(hi)) rho = lo;
    else if (!std::isfinite(lo)) rho = hi;
    else rho = 0.5 * (lo + hi);
  }

  // dual objective 0.5 a'Ka = 0.5 a'grad
  double obj = 0.0;
  for (std::size_t i = 0; i < n; ++i) obj += alpha[i] * grad[i];
  info.dual_objective = 0.5 * obj;

  OcsvmModel model;
  model.kernel = kernel;
  model.nu = nu;
  model.rho = rho;
  model.info = info;
  std::vector<std::size_t> sv;
  for (std::size_t i = 0; i < n; ++i)
    if (alpha[i] > 1e-12) sv.push_back(i);  // bound dust is snapped to exactly 0
  model.support_vectors = Tensor({sv.size(), d});
  model.alphas.resize(sv.size());
  for (std::size_t k = 0; k < sv.size(); ++k) {
    model.alphas[k] = alpha[sv[k]];
    for (std::size_t j = 0; j < d; ++j)
      model.support_vectors.at(k, j) = reps.at(sv[k], j);
  }
  return model;
}

std::vector<double> score_ocsvm(const OcsvmModel& model, const Tensor& queries) {
  require(queries.rank() == 2 && queries.cols() == model.support_vectors.cols(),
          "score_ocsvm: query dimension does not match support vectors");
  std::size_t m = queries.rows(), s = model.support_vectors.rows(),
              d = model.support_vectors.cols();
  std::vector<double> out(m);
  for (std::size_t q = 0; q < m; ++q) {
    const double* qp = queries.data().data() + q * d;
    double acc = 0.0;
    for (std::size_t i = 0; i < s; ++i)
      acc += model.alphas[i] *
             kernel_eval(model.kernel, model.support_vectors.data().data() + i * d, qp, d);
    out[q] = acc - model.rho;
  }
  return out;
}

KdeModel fit_kde(const Tensor& reps, double gamma) {
  require(reps.rank() == 2 && reps.rows() >= 1, "fit_kde: expected nonempty [n x d] matrix");
  KdeModel model;
  model.references = reps;
  model.gamma = gamma > 0.0 ? gamma : default_gamma(reps);
  return model;
}

std::vector<double> score_kde(const KdeModel& model, const Tensor& queries) {
  require(queries.rank() == 2 && queries.cols() == model.references.cols(),
          "score_kde: query dimension does not match references");
  std::size_t m = queries.rows(), n = model.references.rows(), d = model.references.cols();
  std::vector<double> out(m);
  std::vector<double> logs(n);
  for (std::size_t q = 0; q < m; ++q) {
    const double* qp = queries.data().data() + q * d;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      logs[i] = -model.gamma * sq_dist(qp, model.references.data().data() + i * d, d);
      mx = std::max(mx, logs[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(logs[i] - mx);
    out[q] = mx + std::log(s) - std::log(model.gamma);
  }
  return out;
}

std::vector<double> kde_log_score_gradient(const KdeModel& model, const double* query,
                                           std::size_t d) {
  require(d == model.references.cols(), "kde gradient: dimension mismatch");
  std::size_t n = model.references.rows();
  std::vector<double> logs(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    logs[i] = -model.gamma * sq_dist(query, model.references.data().data() + i * d, d);
    mx = std::max(mx, logs[i]);
  }
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    logs[i] = std::exp(logs[i] - mx);
    denom += logs[i];
  }
  std::vector<double> grad(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double w = logs[i] / denom;
    const double* r = model.references.data().data() + i * d;
    for (std::size_t j = 0; j < d; ++j)
      grad[j] += w * (-2.0 * model.gamma) * (query[j] - r[j]);
  }
  return grad;
}

namespace {

// plain lower-triangular Cholesky; returns false on a non-positive pivot
bool cholesky(std::vector<double>& a, std::size_t d) {
  for (std::size_t j = 0; j < d; ++j) {
    double diag = a[j * d + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * d + k] * a[j * d + k];
    if (diag <= 0.0 || !std::isfinite(diag)) return false;
    double l = std::sqrt(diag);
    a[j * d + j] = l;
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * d + k] * a[j * d + k];
      a[i * d + j] = v / l;
    }
  }
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = 0; i < j; ++i) a[i * d + j] = 0.0;
  return true;
}

}  // namespace

GdeModel fit_gde(const Tensor& reps) {
  require(reps.rank() == 2 && reps.rows() >= 2, "fit_gde: need at least 2 rows");
  std::size_t n = reps.rows(), d = reps.cols();
  GdeModel model;
  model.mean = Tensor({d});
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += reps.at(i, j);
    model.mean[j] = m / static_cast<double>(n);
  }
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      double ca = reps.at(i, a) - model.mean[a];
      for (std::size_t b = a; b < d; ++b)
        cov[a * d + b] += ca * (reps.at(i, b) - model.mean[b]);
    }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov[a * d + b] /= static_cast<double>(n);
      cov[b * d + a] = cov[a * d + b];
    }

  double ridge = 1e-6;
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::vector<double> work = cov;
    for (std::size_t j = 0; j < d; ++j) work[j * d + j] += ridge;
    if (cholesky(work, d)) {
      model.chol = Tensor({d, d}, std::move(work));
      model.log_det = 0.0;
      for (std::size_t j = 0; j < d; ++j) model.log_det += 2.0 * std::log(model.chol.at(j, j));
      return model;
    }
    ridge *= 10.0;
  }
  throw std::runtime_error("fit_gde: covariance not positive definite even after ridge escalation");
}

std::vector<double> score_gde(const GdeModel& model, const Tensor& queries) {
  std::size_t d = model.mean.size();
  require(queries.rank() == 2 && queries.cols() == d,
          "score_gde: query dimension does not match model");
  constexpr double kLog2Pi = 1.8378770664093454836;
  std::vector<double> out(queries.rows());
  std::vector<double> z(d);
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    // forward substitution L z = (x - mu); Mahalanobis^2 = ||z||^2
    for (std::size_t i = 0; i < d; ++i) {
      double v = queries.at(q, i) - model.mean[i];
      for (std::size_t k = 0; k < i; ++k) v -= model.chol.at(i, k) * z[k];
      z[i] = v / model.chol.at(i, i);
    }
    double maha2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) maha2 += z[i] * z[i];
    out[q] = -0.5 * (static_cast<double>(d) * kLog2Pi + model.log_det + maha2);
  }
  return out;
}

std::vector<double> rotation_surrogate_score(const ModelBundle& model, const ImageBatch& x,
                                             SurrogateVariant variant) {
  require(model.config.q_outputs == 4,
          "rotation_surrogate_score: model must have 4 rotation outputs");
  auto softmax_rows = [](const Tensor& logits) {
    Tensor p(logits.shape());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      double mx = logits.at(r, 0);
      for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits.at(r, j));
      double s = 0.0;
      for (std::size_t j = 0; j < logits.cols(); ++j) {
        p.at(r, j) = std::exp(logits.at(r, j) - mx);
        s += p.at(r, j);
      }
      for (std::size_t j = 0; j < logits.cols(); ++j) p.at(r, j) /= s;
    }
    return p;
  };

  std::vector<double> out(x.count, 0.0);
  if (variant == SurrogateVariant::zero_only) {
    Tensor probs = softmax_rows(forward_q(model, flatten(x)));
    for (std::size_t i = 0; i < x.count; ++i) out[i] = probs.at(i, 0);
    return out;
  }
  for (int y = 0; y < 4; ++y) {
    Tensor probs = softmax_rows(forward_q(model, flatten(rot90(x, y))));
    for (std::size_t i = 0; i < x.count; ++i) out[i] += probs.at(i, static_cast<std::size_t>(y));
  }
  return out;
}

std::string detector_kind_name(DetectorKind k) {
  switch (k) {
    case DetectorKind::ocsvm: return "ocsvm";
    case DetectorKind::kde: return "kde";
    case DetectorKind::gde: return "gde";
  }
  return "kde";
}

DetectorKind detector_kind_from_name(const std::string& name) {
  if (name == "ocsvm") return DetectorKind::ocsvm;
  if (name == "kde") return DetectorKind::kde;
  if (name == "gde") return DetectorKind::gde;
  throw std::invalid_argument("unknown detector kind: " + name);
}

std::vector<double> Detector::score(const Tensor& queries) const {
  switch (kind) {
    case DetectorKind::ocsvm: return score_ocsvm(ocsvm, queries);
    case DetectorKind::kde: return score_kde(kde, queries);
    case DetectorKind::gde: return score_gde(gde, queries);
  }
  throw std::logic_error("Detector::score: bad kind");
}

Detector fit_detector(DetectorKind kind, const Tensor& reps, double nu,
                      const KernelSpec& kernel) {
  Detector det;
  det.kind = kind;
  switch (kind) {
    case DetectorKind::ocsvm: {
      KernelSpec spec = kernel;
      if (spec.kind == KernelKind::rbf && spec.gamma <= 0.0) spec.gamma = default_gamma(reps);
      det.ocsvm = fit_ocsvm(reps, nu, spec);
      break;
    }
    case DetectorKind::kde:
      det.kde = fit_kde(reps, kernel.kind == KernelKind::rbf ? kernel.gamma : 0.0);
      break;
    case DetectorKind::gde:
      det.gde = fit_gde(reps);
      break;
  }
  return det;
}

void save_detector(const Detector& det, const std::string& path) {
  ByteWriter w;
  w.bytes("OCD1", 4);
  w.u16(kDetectorVersion);
  w.u8(static_cast<std::uint8_t>(det.kind));
  switch (det.kind) {
    case DetectorKind::ocsvm:
      w.u8(det.ocsvm.kernel.kind == KernelKind::linear ? 0 : 1);
      w.f64(det.ocsvm.kernel.gamma);
      w.f64(det.ocsvm.nu);
      w.f64(det.ocsvm.rho);
      w.tensor(det.ocsvm.support_vectors);
      w.tensor(Tensor({det.ocsvm.alphas.size()}, det.ocsvm.alphas));
      break;
    case DetectorKind::kde:
      w.u8(1);
      w.f64(det.kde.gamma);
      w.tensor(det.kde.references);
      break;
    case DetectorKind::gde:
      w.u8(1);
      w.f64(det.gde.log_det);
      w.tensor(det.gde.mean);
      w.tensor(det.gde.chol);
      break;
  }
  w.append_crc32();
  write_file(path, w.buffer());
}

Detector load_detector(const std::string& path) {
  ByteReader r(read_file(path));
  r.check_crc32("detector file " + path);
  r.magic("OCD1", "detector file " + path);
  std::uint16_t version = r.u16();
  if (version > kDetectorVersion)
    throw std::runtime_error("detector file " + path + ": format version " +
                             std::to_string(version) + " is newer than supported " +
                             std::to_string(kDetectorVersion));
  Detector det;
  det.kind = static_cast<DetectorKind>(r.u8());
  switch (det.kind) {
    case DetectorKind::ocsvm: {
      det.ocsvm.kernel.kind = r.u8() == 0 ? KernelKind::linear : KernelKind::rbf;
      det.ocsvm.kernel.gamma = r.f64();
      det.ocsvm.nu = r.f64();
      det.ocsvm.rho = r.f64();
      det.ocsvm.support_vectors = r.tensor();
      Tensor alphas = r.tensor();
      det.ocsvm.alphas = alphas.data();
      if (det.ocsvm.alphas.size() != det.ocsvm.support_vectors.rows())
        throw std::runtime_error("detector file " + path + ": alpha count mismatch");
      break;
    }
    case DetectorKind::kde:
      r.u8();
      det.kde.gamma = r.f64();
      det.kde.references = r.tensor();
      break;
    case DetectorKind::gde: {
      r.u8();
      det.gde.log_det = r.f64();
      det.gde.mean = r.tensor();
      det.gde.chol = r.tensor();
      if (det.gde.chol.rows() != det.gde.mean.size() ||
          det.gde.chol.cols() != det.gde.mean.size())
        throw std::runtime_error("detector file " + path + ": Cholesky shape mismatch");
      break;
    }
    default:
      throw std::runtime_error("detector file " + path + ": unknown detector kind tag");
  }
  if (r.remaining() != 0)
    throw std::runtime_error("detector file " + path + ": trailing bytes");
  return det;
}

}  // namespace occ
