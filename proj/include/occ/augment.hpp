#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occ/rng.hpp"
#include "occ/tensor.hpp"

namespace occ {

// Batch of square images, pixel values in [0,1], layout [n][c][h][w].
struct ImageBatch {
  std::size_t count = 0, channels = 0, height = 0, width = 0;
  std::vector<double> pixels;

  static ImageBatch empty(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  double at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    return pixels[((n * channels + c) * height + i) * width + j];
  }
  double& at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return pixels[((n * channels + c) * height + i) * width + j];
  }
  std::size_t pixels_per_image() const { return channels * height * width; }
  ImageBatch slice(const std::vector<std::size_t>& indices) const;
  void append(const ImageBatch& other);
};

// rows = images, columns = flattened pixels; network input layout
Tensor flatten(const ImageBatch& batch);
ImageBatch unflatten(const Tensor& rows, std::size_t channels, std::size_t height,
                     std::size_t width);

// The eight deterministic transforms available for distribution augmentation.
enum class DistTransform : std::uint8_t {
  identity,
  hflip,
  rot90,
  rot180,
  rot270,
  rot90_hflip,
  rot180_hflip,
  rot270_hflip,
};

std::string dist_transform_name(DistTransform t);
DistTransform dist_transform_from_name(const std::string& name);

// counter-clockwise rotation applied k times: out[c,i,j] = in[c,j,W-1-i]
ImageBatch rot90(const ImageBatch& img, int k);
// out[c,i,j] = in[c,i,W-1-j]
ImageBatch hflip(const ImageBatch& img);
// rotation first, then flip for the *_hflip elements
ImageBatch apply_dist_transform(const ImageBatch& img, DistTransform t);

// Parameters of the stochastic view augmentation process. Image ops are
// applied in order: crop-resize, hflip, brightness, contrast, grayscale,
// blur, final clamp to [0,1]. Vector data uses scale jitter plus noise.
struct ViewOps {
  double crop_scale_min = 0.6;
  double crop_scale_max = 1.0;
  double hflip_prob = 0.5;
  double brightness_jitter = 0.2;
  double contrast_jitter = 0.2;
  double grayscale_prob = 0.1;
  double blur_sigma_min = 0.0;
  double blur_sigma_max = 1.0;
  double vec_noise_sigma = 0.05;
  double vec_scale_jitter = 0.1;  // multiplicative factor in [1-j, 1+j]
};

struct AugmentPlan {
  ViewOps view;
  std::vector<DistTransform> dist_set{DistTransform::identity};
  std::uint64_t seed = 0;

  // identity present, no duplicates, valid parameter ranges
  void validate() const;
};

// Two calls with independent rng states realize the two view processes of a
// positive pair. Pure function of (plan, input, rng state).
ImageBatch sample_view(const AugmentPlan& plan, const ImageBatch& x, Rng& rng);
Tensor sample_view(const AugmentPlan& plan, const Tensor& rows, Rng& rng);

// Union of the transformed copies; transform-major order, each copy keeps
// (instance_id = original index, transform_id = position in dist_set).
struct ExpandedBatch {
  ImageBatch images;
  std::vector<std::size_t> instance_id;
  std::vector<std::size_t> transform_id;
};

ExpandedBatch expand_distribution(const ImageBatch& data,
                                  const std::vector<DistTransform>& dist_set);

struct ExpandedVectors {
  Tensor rows;
  std::vector<std::size_t> instance_id;
  std::vector<std::size_t> transform_id;
};

// Vector data admits only the identity transform.
ExpandedVectors expand_distribution(const Tensor& rows,
                                    const std::vector<DistTransform>& dist_set);

}  // namespace occ
