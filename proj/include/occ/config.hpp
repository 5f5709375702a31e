#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "occ/augment.hpp"
#include "occ/dataset.hpp"
#include "occ/detectors.hpp"
#include "occ/evaluate.hpp"
#include "occ/explain.hpp"
#include "occ/network.hpp"
#include "occ/optimize.hpp"

namespace occ {

// Configuration problem: unknown key, bad value, inconsistent combination.
// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Plain-text `key = value` document in [section] groups. Every key is known
// to the schema (typos are hard errors) and carries a default, so an empty
// document is a valid configuration. parse(serialize()) is the identity.
class PipelineConfig {
 public:
  static PipelineConfig defaults();
  static PipelineConfig parse(const std::string& text);
  static PipelineConfig parse_file(const std::string& path);

  std::string serialize() const;
  void set(const std::string& key, const std::string& value);  // "section.key"
  const std::string& get(const std::string& key) const;

  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

  bool operator==(const PipelineConfig&) const = default;

  // typed views over the document
  DatasetSpec dataset_spec() const;
  NetworkConfig network_config(std::size_t input_dim, std::uint64_t seed) const;
  AugmentPlan augment_plan() const;
  TrainRun train_run(std::uint64_t seed) const;
  Objective objective() const;
  DetectorKind detector_kind() const;
  KernelSpec detector_kernel() const;  // gamma <= 0 means the heuristic
  double detector_nu() const;
  std::size_t detector_train_subset() const;  // 0 = all train samples
  std::vector<std::uint64_t> seeds() const;
  MmdConfig mmd_config(std::uint64_t seed) const;
  std::vector<std::size_t> mmd_batch_sizes() const;
  std::vector<std::size_t> explain_samples() const;
  int explain_steps() const;
  KdeScoreMode explain_mode() const;
  bool explain_ascii() const;
  std::string out_dir() const;
  std::uint64_t root_seed() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace occ
