#include "occ/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace occ {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

ImageBatch ImageBatch::empty(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  ImageBatch b;
  b.count = n;
  b.channels = c;
  b.height = h;
  b.width = w;
  b.pixels.assign(n * c * h * w, 0.0);
  return b;
}

ImageBatch ImageBatch::slice(const std::vector<std::size_t>& indices) const {
  ImageBatch out = ImageBatch::empty(indices.size(), channels, height, width);
  std::size_t per = pixels_per_image();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    require(indices[k] < count, "ImageBatch::slice: index out of range");
    std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(indices[k] * per), per,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(k * per));
  }
  return out;
}

void ImageBatch::append(const ImageBatch& other) {
  if (count == 0 && pixels.empty()) {
    *this = other;
    return;
  }
  require(channels == other.channels && height == other.height && width == other.width,
          "ImageBatch::append: geometry mismatch");
  pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
  count += other.count;
}

Tensor flatten(const ImageBatch& batch) {
  Tensor t({batch.count, batch.pixels_per_image()});
  t.data() = batch.pixels;
  return t;
}

ImageBatch unflatten(const Tensor& rows, std::size_t channels, std::size_t height,
                     std::size_t width) {
  require(rows.rank() == 2 && rows.cols() == channels * height * width,
          "unflatten: row width does not match image geometry");
  ImageBatch b = ImageBatch::empty(rows.rows(), channels, height, width);
  b.pixels = rows.data();
  return b;
}

std::string dist_transform_name(DistTransform t) {
  switch (t) {
    case DistTransform::identity: return "identity";
    case DistTransform::hflip: return "hflip";
    case DistTransform::rot90: return "rot90";
    case DistTransform::rot180: return "rot180";
    case DistTransform::rot270: return "rot270";
    case DistTransform::rot90_hflip: return "rot90_hflip";
    case DistTransform::rot180_hflip: return "rot180_hflip";
    case DistTransform::rot270_hflip: return "rot270_hflip";
  }
  return "identity";
}

DistTransform dist_transform_from_name(const std::string& name) {
  for (int i = 0; i < 8; ++i) {
    auto t = static_cast<DistTransform>(i);
    if (dist_transform_name(t) == name) return t;
  }
  throw std::invalid_argument("unknown distribution transform: " + name);
}

ImageBatch rot90(const ImageBatch& img, int k) {
  require(k >= 0 && k <= 3, "rot90: k must be in {0,1,2,3}");
  require(img.height == img.width, "rot90: images must be square");
  ImageBatch cur = img;
  for (int step = 0; step < k; ++step) {
    ImageBatch next = ImageBatch::empty(cur.count, cur.channels, cur.height, cur.width);
    std::size_t w = cur.width;
    for (std::size_t n = 0; n < cur.count; ++n)
      for (std::size_t c = 0; c < cur.channels; ++c)
        for (std::size_t i = 0; i < cur.height; ++i)
          for (std::size_t j = 0; j < w; ++j)
            next.at(n, c, i, j) = cur.at(n, c, j, w - 1 - i);
    cur = std::move(next);
  }
  return cur;
}

ImageBatch hflip(const ImageBatch& img) {
  ImageBatch out = ImageBatch::empty(img.count, img.channels, img.height, img.width);
  std::size_t w = img.width;
  for (std::size_t n = 0; n < img.count; ++n)
    for (std::size_t c = 0; c < img.channels; ++c)
      for (std::size_t i = 0; i < img.height; ++i)
        for (std::size_t j = 0; j < w; ++j) out.at(n, c, i, j) = img.at(n, c, i, w - 1 - j);
  return out;
}

ImageBatch apply_dist_transform(const ImageBatch& img, DistTransform t) {
  switch (t) {
    case DistTransform::identity: return img;
    case DistTransform::hflip: return hflip(img);
    case DistTransform::rot90: return rot90(img, 1);
    case DistTransform::rot180: return rot90(img, 2);
    case DistTransform::rot270: return rot90(img, 3);
    case DistTransform::rot90_hflip: return hflip(rot90(img, 1));
    case DistTransform::rot180_hflip: return hflip(rot90(img, 2));
    case DistTransform::rot270_hflip: return hflip(rot90(img, 3));
  }
  return img;
}

void AugmentPlan::validate() const {
  require(!dist_set.empty(), "augment plan: dist_set must not be empty");
  require(dist_set.front() == DistTransform::identity ||
              std::find(dist_set.begin(), dist_set.end(), DistTransform::identity) !=
                  dist_set.end(),
          "augment plan: dist_set must contain identity");
  std::set<DistTransform> seen(dist_set.begin(), dist_set.end());
  require(seen.size() == dist_set.size(), "augment plan: duplicate transform in dist_set");
  require(view.crop_scale_min > 0.0 && view.crop_scale_min <= view.crop_scale_max &&
              view.crop_scale_max <= 1.0,
          "augment plan: crop scale range must satisfy 0 < min <= max <= 1");
  require(view.hflip_prob >= 0.0 && view.hflip_prob <= 1.0,
          "augment plan: hflip probability out of [0,1]");
  require(view.brightness_jitter >= 0.0 && view.contrast_jitter >= 0.0,
          "augment plan: negative jitter range");
  require(view.grayscale_prob >= 0.0 && view.grayscale_prob <= 1.0,
          "augment plan: grayscale probability out of [0,1]");
  require(view.blur_sigma_min >= 0.0 && view.blur_sigma_min <= view.blur_sigma_max,
          "augment plan: blur sigma range invalid");
  require(view.vec_noise_sigma >= 0.0, "augment plan: negative noise sigma");
  require(view.vec_scale_jitter >= 0.0 && view.vec_scale_jitter < 1.0,
          "augment plan: vector scale jitter must be in [0,1)");
}

namespace {

// bilinear resample of one image's crop window back to the native resolution,
// corner-aligned
void crop_resize_one(ImageBatch& batch, std::size_t n, std::size_t ch_top,
                     std::size_t cw_left, std::size_t ch, std::size_t cw) {
  std::size_t H = batch.height, W = batch.width, C = batch.channels;
  if (ch == H && cw == W) return;
  std::vector<double> out(C * H * W);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < H; ++i) {
      double sy = (H > 1) ? static_cast<double>(i) * (static_cast<double>(ch) - 1.0) /
                                (static_cast<double>(H) - 1.0)
                          : 0.0;
      std::size_t y0 = static_cast<std::size_t>(sy);
      if (y0 + 1 >= ch) y0 = ch - 1;
      double fy = sy - static_cast<double>(y0);
      std::size_t y1 = std::min(y0 + 1, ch - 1);
      for (std::size_t j = 0; j < W; ++j) {
        double sx = (W > 1) ? static_cast<double>(j) * (static_cast<double>(cw) - 1.0) /
                                  (static_cast<double>(W) - 1.0)
                            : 0.0;
        std::size_t x0 = static_cast<std::size_t>(sx);
        if (x0 + 1 >= cw) x0 = cw - 1;
        double fx = sx - static_cast<double>(x0);
        std::size_t x1 = std::min(x0 + 1, cw - 1);
        double v00 = batch.at(n, c, ch_top + y0, cw_left + x0);
        double v01 = batch.at(n, c, ch_top + y0, cw_left + x1);
        double v10 = batch.at(n, c, ch_top + y1, cw_left + x0);
        double v11 = batch.at(n, c, ch_top + y1, cw_left + x1);
        out[(c * H + i) * W + j] =
            (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
      }
    }
  }
  std::copy(out.begin(), out.end(),
            batch.pixels.begin() + static_cast<std::ptrdiff_t>(n * batch.pixels_per_image()));
}

void blur_one(ImageBatch& batch, std::size_t n, double sigma) {
  if (sigma < 1e-12) return;
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kern(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    double v = std::exp(-0.5 * (t * t) / (sigma * sigma));
    kern[static_cast<std::size_t>(t + radius)] = v;
    sum += v;
  }
  for (double& v : kern) v /= sum;

  std::size_t H = batch.height, W = batch.width, C = batch.channels;
  std::vector<double> tmp(H * W);
  auto clampi = [](long v, long lo, long hi) { return std::max(lo, std::min(hi, v)); };
  for (std::size_t c = 0; c < C; ++c) {
    // horizontal pass with edge replication
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          long jj = clampi(static_cast<long>(j) + t, 0, static_cast<long>(W) - 1);
          acc += kern[static_cast<std::size_t>(t + radius)] *
                 batch.at(n, c, i, static_cast<std::size_t>(jj));
        }
        tmp[i * W + j] = acc;
      }
    // vertical pass
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          long ii = clampi(static_cast<long>(i) + t, 0, static_cast<long>(H) - 1);
          acc += kern[static_cast<std::size_t>(t + radius)] *
                 tmp[static_cast<std::size_t>(ii) * W + j];
        }
        batch.at(n, c, i, j) = acc;
      }
  }
}

}  // namespace

ImageBatch sample_view(const AugmentPlan& plan, const ImageBatch& x, Rng& rng) {
  plan.validate();
  const ViewOps& v = plan.view;
  ImageBatch out = x;
  std::size_t H = x.height, W = x.width, C = x.channels;
  for (std::size_t n = 0; n < x.count; ++n) {
    // crop-resize
    double s = rng.uniform(v.crop_scale_min, v.crop_scale_max);
    std::size_t ch = std::max<std::size_t>(
        1, std::min<std::size_t>(H, static_cast<std::size_t>(std::lround(s * H))));
    std::size_t cw = std::max<std::size_t>(
        1, std::min<std::size_t>(W, static_cast<std::size_t>(std::lround(s * W))));
    std::size_t top = rng.uniform_below(H - ch + 1);
    std::size_t left = rng.uniform_below(W - cw + 1);
    crop_resize_one(out, n, top, left, ch, cw);

    if (rng.uniform() < v.hflip_prob) {
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W / 2; ++j)
            std::swap(out.at(n, c, i, j), out.at(n, c, i, W - 1 - j));
    }

    if (v.brightness_jitter > 0.0) {
      double b = rng.uniform(-v.brightness_jitter, v.brightness_jitter);
      for (std::size_t p = 0; p < out.pixels_per_image(); ++p)
        out.pixels[n * out.pixels_per_image() + p] += b;
    }

    if (v.contrast_jitter > 0.0) {
      double f = 1.0 + rng.uniform(-v.contrast_jitter, v.contrast_jitter);
      double mean = 0.0;
      for (std::size_t p = 0; p < out.pixels_per_image(); ++p)
        mean += out.pixels[n * out.pixels_per_image() + p];
      mean /= static_cast<double>(out.pixels_per_image());
      for (std::size_t p = 0; p < out.pixels_per_image(); ++p) {
        double& px = out.pixels[n * out.pixels_per_image() + p];
        px = mean + (px - mean) * f;
      }
    }

    if (rng.uniform() < v.grayscale_prob && C > 1) {
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          double g = 0.0;
          for (std::size_t c = 0; c < C; ++c) g += out.at(n, c, i, j);
          g /= static_cast<double>(C);
          for (std::size_t c = 0; c < C; ++c) out.at(n, c, i, j) = g;
        }
    }

    double sigma = rng.uniform(v.blur_sigma_min, v.blur_sigma_max);
    blur_one(out, n, sigma);
  }
  for (double& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
  return out;
}

Tensor sample_view(const AugmentPlan& plan, const Tensor& rows, Rng& rng) {
  plan.validate();
  require(rows.rank() == 2, "sample_view: vector data must be a [n x d] tensor");
  const ViewOps& v = plan.view;
  Tensor out = rows;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    double f = 1.0 + rng.uniform(-v.vec_scale_jitter, v.vec_scale_jitter);
    for (std::size_t j = 0; j < rows.cols(); ++j)
      out.at(r, j) = out.at(r, j) * f + v.vec_noise_sigma * rng.normal();
  }
  out.quantize();
  return out;
}

ExpandedBatch expand_distribution(const ImageBatch& data,
                                  const std::vector<DistTransform>& dist_set) {
  AugmentPlan check;
  check.dist_set = dist_set;
  check.validate();
  ExpandedBatch out;
  for (std::size_t t = 0; t < dist_set.size(); ++t) {
    ImageBatch transformed = apply_dist_transform(data, dist_set[t]);
    out.images.append(transformed);
    for (std::size_t i = 0; i < data.count; ++i) {
      out.instance_id.push_back(i);
      out.transform_id.push_back(t);
    }
  }
  return out;
}

ExpandedVectors expand_distribution(const Tensor& rows,
                                    const std::vector<DistTransform>& dist_set) {
  require(rows.rank() == 2, "expand_distribution: vector data must be [n x d]");
  for (DistTransform t : dist_set)
    require(t == DistTransform::identity,
            "expand_distribution: only the identity transform applies to vector data");
  ExpandedVectors out;
  out.rows = rows;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    out.instance_id.push_back(i);
    out.transform_id.push_back(0);
  }
  return out;
}

}  // namespace occ
