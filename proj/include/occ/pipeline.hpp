#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "occ/config.hpp"

namespace occ {

// A stage prerequisite (dataset, model, representations, ...) is not on disk.
// The CLI maps this to exit code 3.
struct MissingArtifact : std::runtime_error {
  explicit MissingArtifact(const std::string& path)
      : std::runtime_error("missing prerequisite artifact: " + path) {}
};

enum class Stage { gen, train, embed, fit, score, eval, mmd, explain, all };

Stage stage_from_name(const std::string& name);

struct StageOverrides {
  std::optional<std::uint64_t> seed;          // restrict to one seed
  std::optional<std::string> split;           // embed: train | test
  std::optional<std::string> model_path;      // embed/explain: external model
  std::optional<std::string> reps_path;       // fit: external representations
  std::optional<std::string> detector;        // fit/score: detector kind
  std::optional<std::vector<std::size_t>> batch_sizes;  // mmd sweep
  std::optional<std::vector<std::size_t>> samples;      // explain ids
};

// Artifact paths under the configured output directory.
struct ArtifactPaths {
  explicit ArtifactPaths(const std::string& out_dir);
  std::string root;
  std::string dataset_dir, models_dir, reps_dir, detectors_dir, report_dir;
  std::string train_data, test_in_data, test_out_data, train_manifest, test_manifest;
  std::string model(std::uint64_t seed) const;
  std::string loss_trace(std::uint64_t seed) const;
  std::string reps(const std::string& split, std::uint64_t seed) const;
  std::string detector(const std::string& kind, std::uint64_t seed) const;
  std::string scores(std::uint64_t seed) const;
  std::string train_scores(std::uint64_t seed) const;
  std::string summary, mmd_csv, lock;
  std::string attribution(std::size_t sample, std::uint64_t seed) const;
};

// Runs one stage (or `all`) against the configuration. Owns the output
// directory exclusively through a lockfile for the duration of the call.
void run_pipeline(const PipelineConfig& config, Stage stage, const StageOverrides& ov = {});

}  // namespace occ
