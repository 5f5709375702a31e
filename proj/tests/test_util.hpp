#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "occ/augment.hpp"
#include "occ/rng.hpp"
#include "occ/tensor.hpp"

namespace occ::testutil {

// Central finite differences of eval() with respect to the values behind
// `storage`. eval must recompute the scalar from scratch on every call.
inline std::vector<double> fd_gradient(const std::function<double()>& eval,
                                       std::vector<double>& storage, double h = 1e-5) {
  std::vector<double> grad(storage.size());
  for (std::size_t i = 0; i < storage.size(); ++i) {
    double keep = storage[i];
    storage[i] = keep + h;
    double up = eval();
    storage[i] = keep - h;
    double dn = eval();
    storage[i] = keep;
    grad[i] = (up - dn) / (2.0 * h);
  }
  return grad;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

inline double max_rel_err(const Tensor& analytic, const std::vector<double>& fd,
                          double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i)
    worst = std::max(worst, rel_err(analytic[i], fd[i], floor));
  return worst;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

inline ImageBatch random_images(std::size_t n, std::size_t c, std::size_t side, Rng& rng) {
  ImageBatch b = ImageBatch::empty(n, c, side, side);
  for (double& p : b.pixels) p = rng.uniform();
  return b;
}

// unique scratch directory, removed on destruction
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("occ_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string root() const { return dir_.string(); }

 private:
  std::filesystem::path dir_;
};

}  // namespace occ::testutil
