#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occ/augment.hpp"
#include "occ/tensor.hpp"

namespace occ {

enum class DataKind { images, vectors };

// One split of a dataset: either an image batch or vector rows.
struct Dataset {
  DataKind kind = DataKind::vectors;
  ImageBatch images;
  Tensor vectors;

  std::size_t n() const { return kind == DataKind::images ? images.count : vectors.rows(); }
  std::size_t input_dim() const {
    return kind == DataKind::images ? images.pixels_per_image() : vectors.cols();
  }
  // network-input view: images flattened row-wise
  Tensor as_rows() const { return kind == DataKind::images ? flatten(images) : vectors; }
  Dataset take(const std::vector<std::size_t>& indices) const;
};

// Synthetic benchmark families. shapes_images draws oriented horizontal bars
// as the inlier class (rotation-sensitive on purpose); the outlier class is
// either the rotated bar (vbar) or a cross. gaussian_blobs and ring are
// vector tasks for the non-image path.
struct DatasetSpec {
  enum class Family { shapes_images, gaussian_blobs, ring };
  enum class OutlierShape { vbar, cross };

  Family family = Family::shapes_images;
  // shapes_images
  std::size_t image_size = 12;
  OutlierShape outlier_shape = OutlierShape::vbar;
  double pixel_noise = 0.02;
  // gaussian_blobs / ring
  std::size_t dim = 8;
  double blob_distance = 4.0;
  double blob_sigma = 1.0;
  double ring_radius = 1.0;
  double ring_width = 0.1;
  // common
  std::size_t n_train = 128;
  std::size_t n_test_in = 64;
  std::size_t n_test_out = 64;
  double contamination_ratio = 0.0;  // in [0,1): outlier fraction mixed into train
  std::uint64_t seed = 0;

  void validate() const;
};

struct GeneratedData {
  Dataset train;
  Dataset test_in;
  Dataset test_out;
  // per train sample: true if drawn from the inlier generator
  std::vector<bool> train_is_inlier;
};

GeneratedData generate(const DatasetSpec& spec);

// floor(contamination_ratio * n_train)
std::size_t contaminated_count(const DatasetSpec& spec);

// Writes train/test splits in the binary tensor format plus CSV manifests
// (train: provenance tags; test: labels). Byte-identical for a fixed spec.
void gen_data(const DatasetSpec& spec, const std::string& out_dir);

enum class IngestFormat { binary_tensor, csv_vectors };

// Loads external data so stage two can run on representations produced
// elsewhere. Rank-4 tensors come back as images, rank-2 as vectors.
Dataset ingest(const std::string& path, IngestFormat format);

// manifest helpers shared by gen_data and the pipeline stages
void write_train_manifest(const std::string& path, const std::vector<bool>& is_inlier);
std::vector<bool> read_train_manifest(const std::string& path);
void write_test_manifest(const std::string& path, std::size_t n_in, std::size_t n_out);

}  // namespace occ
