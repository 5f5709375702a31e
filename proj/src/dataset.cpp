#include "occ/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "occ/rng.hpp"
#include "occ/serialize.hpp"

namespace occ {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Dataset Dataset::take(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.kind = kind;
  if (kind == DataKind::images) {
    out.images = images.slice(indices);
  } else {
    Tensor t({indices.size(), vectors.cols()});
    for (std::size_t k = 0; k < indices.size(); ++k)
      for (std::size_t j = 0; j < vectors.cols(); ++j)
        t.at(k, j) = vectors.at(indices[k], j);
    out.vectors = std::move(t);
  }
  return out;
}

void DatasetSpec::validate() const {
  require(n_train > 0 && n_test_in > 0 && n_test_out > 0,
          "dataset spec: all split sizes must be positive");
  require(contamination_ratio >= 0.0 && contamination_ratio < 1.0,
          "dataset spec: contamination_ratio must be in [0,1)");
  if (family == Family::shapes_images)
    require(image_size >= 4, "dataset spec: image_size must be at least 4");
  else
    require(dim >= 2, "dataset spec: dim must be at least 2");
}

namespace {

// Horizontal bar with jittered row, length, thickness and intensity. Rotating
// by 90 degrees turns it into a vertical bar, so the inlier class is not
// rotation invariant and rotation prediction carries signal.
void draw_hbar(ImageBatch& batch, std::size_t n, std::size_t g, Rng& rng) {
  std::size_t thickness = 1 + rng.uniform_below(2);
  std::size_t row = rng.uniform_below(g - thickness + 1);
  std::size_t len = g / 2 + rng.uniform_below(g - g / 2 - 1);
  std::size_t col = rng.uniform_below(g - len + 1);
  double intensity = rng.uniform(0.7, 1.0);
  for (std::size_t t = 0; t < thickness; ++t)
    for (std::size_t j = 0; j < len; ++j) batch.at(n, 0, row + t, col + j) = intensity;
}

void draw_vbar(ImageBatch& batch, std::size_t n, std::size_t g, Rng& rng) {
  std::size_t thickness = 1 + rng.uniform_below(2);
  std::size_t col = rng.uniform_below(g - thickness + 1);
  std::size_t len = g / 2 + rng.uniform_below(g - g / 2 - 1);
  std::size_t row = rng.uniform_below(g - len + 1);
  double intensity = rng.uniform(0.7, 1.0);
  for (std::size_t t = 0; t < thickness; ++t)
    for (std::size_t i = 0; i < len; ++i) batch.at(n, 0, row + i, col + t) = intensity;
}

void draw_cross(ImageBatch& batch, std::size_t n, std::size_t g, Rng& rng) {
  draw_hbar(batch, n, g, rng);
  draw_vbar(batch, n, g, rng);
}

ImageBatch make_shapes(std::size_t n, const DatasetSpec& spec, bool inlier, Rng& rng) {
  std::size_t g = spec.image_size;
  ImageBatch batch = ImageBatch::empty(n, 1, g, g);
  for (std::size_t k = 0; k < n; ++k) {
    if (inlier)
      draw_hbar(batch, k, g, rng);
    else if (spec.outlier_shape == DatasetSpec::OutlierShape::vbar)
      draw_vbar(batch, k, g, rng);
    else
      draw_cross(batch, k, g, rng);
    for (std::size_t p = 0; p < batch.pixels_per_image(); ++p) {
      double& px = batch.pixels[k * batch.pixels_per_image() + p];
      px = std::clamp(px + spec.pixel_noise * rng.normal(), 0.0, 1.0);
    }
  }
  return batch;
}

Tensor make_vectors(std::size_t n, const DatasetSpec& spec, bool inlier, Rng& rng) {
  Tensor rows({n, spec.dim});
  if (spec.family == DatasetSpec::Family::gaussian_blobs) {
    // inlier blob at the origin, outlier blob shifted along the diagonal
    double shift = inlier ? 0.0 : spec.blob_distance / std::sqrt(static_cast<double>(spec.dim));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < spec.dim; ++j)
        rows.at(i, j) = shift + spec.blob_sigma * rng.normal();
  } else {  // ring: inliers on a radius-r annulus, outliers concentrated inside
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0.0;
      std::vector<double> dir(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) {
        dir[j] = rng.normal();
        norm += dir[j] * dir[j];
      }
      norm = std::sqrt(std::max(norm, 1e-300));
      double radius = inlier ? spec.ring_radius + spec.ring_width * rng.normal()
                             : 0.3 * spec.ring_radius * rng.uniform();
      for (std::size_t j = 0; j < spec.dim; ++j) rows.at(i, j) = radius * dir[j] / norm;
    }
  }
  return rows;
}

Dataset make_split(std::size_t n, const DatasetSpec& spec, bool inlier, Rng& rng) {
  Dataset d;
  if (spec.family == DatasetSpec::Family::shapes_images) {
    d.kind = DataKind::images;
    d.images = make_shapes(n, spec, inlier, rng);
  } else {
    d.kind = DataKind::vectors;
    d.vectors = make_vectors(n, spec, inlier, rng);
  }
  return d;
}

}  // namespace

std::size_t contaminated_count(const DatasetSpec& spec) {
  return static_cast<std::size_t>(
      std::floor(spec.contamination_ratio * static_cast<double>(spec.n_train)));
}

GeneratedData generate(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "data"));

  std::size_t n_out = contaminated_count(spec);
  std::size_t n_in = spec.n_train - n_out;

  GeneratedData out;
  Dataset train_in = make_split(n_in, spec, true, rng);
  Dataset train_out = n_out > 0 ? make_split(n_out, spec, false, rng) : Dataset{};
  out.test_in = make_split(spec.n_test_in, spec, true, rng);
  out.test_out = make_split(spec.n_test_out, spec, false, rng);

  // interleave the contaminated samples with a seeded permutation
  std::vector<std::size_t> order(spec.n_train);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  Dataset merged = train_in;
  if (n_out > 0) {
    if (merged.kind == DataKind::images) {
      merged.images.append(train_out.images);
    } else {
      Tensor all({spec.n_train, spec.dim});
      for (std::size_t i = 0; i < n_in; ++i)
        for (std::size_t j = 0; j < spec.dim; ++j) all.at(i, j) = train_in.vectors.at(i, j);
      for (std::size_t i = 0; i < n_out; ++i)
        for (std::size_t j = 0; j < spec.dim; ++j)
          all.at(n_in + i, j) = train_out.vectors.at(i, j);
      merged.vectors = std::move(all);
    }
  }
  out.train = merged.take(order);
  out.train_is_inlier.assign(spec.n_train, true);
  for (std::size_t i = 0; i < spec.n_train; ++i) out.train_is_inlier[i] = order[i] < n_in;
  return out;
}

namespace {

Tensor dataset_tensor(const Dataset& d) {
  if (d.kind == DataKind::vectors) return d.vectors;
  Tensor t({d.images.count, d.images.channels, d.images.height, d.images.width});
  t.data() = d.images.pixels;
  return t;
}

}  // namespace

void write_train_manifest(const std::string& path, const std::vector<bool>& is_inlier) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "sample_id,provenance\n";
  for (std::size_t i = 0; i < is_inlier.size(); ++i)
    f << i << ',' << (is_inlier[i] ? "inlier" : "outlier") << '\n';
}

std::vector<bool> read_train_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<bool> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("train manifest " + path + ": malformed line");
    std::string tag = line.substr(comma + 1);
    if (!tag.empty() && tag.back() == '\r') tag.pop_back();
    out.push_back(tag == "inlier");
  }
  return out;
}

void write_test_manifest(const std::string& path, std::size_t n_in, std::size_t n_out) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "sample_id,label\n";
  for (std::size_t i = 0; i < n_in + n_out; ++i)
    f << i << ',' << (i < n_in ? 1 : 0) << '\n';
}

void gen_data(const DatasetSpec& spec, const std::string& out_dir) {
  GeneratedData data = generate(spec);
  std::filesystem::create_directories(out_dir);
  auto p = [&](const std::string& name) { return (std::filesystem::path(out_dir) / name).string(); };
  save_tensor(dataset_tensor(data.train), p("train.oct"));
  save_tensor(dataset_tensor(data.test_in), p("test_in.oct"));
  save_tensor(dataset_tensor(data.test_out), p("test_out.oct"));
  write_train_manifest(p("train_manifest.csv"), data.train_is_inlier);
  write_test_manifest(p("test_manifest.csv"), spec.n_test_in, spec.n_test_out);
}

Dataset ingest(const std::string& path, IngestFormat format) {
  Dataset d;
  if (format == IngestFormat::binary_tensor) {
    Tensor t = load_tensor(path);
    if (t.rank() == 4) {
      d.kind = DataKind::images;
      d.images = ImageBatch::empty(t.dim(0), t.dim(1), t.dim(2), t.dim(3));
      d.images.pixels = t.data();
    } else if (t.rank() == 2) {
      d.kind = DataKind::vectors;
      d.vectors = std::move(t);
    } else {
      throw std::runtime_error("ingest " + path + ": expected rank 2 (vectors) or rank 4 (images), got rank " +
                               std::to_string(t.rank()));
    }
    return d;
  }

  // csv_vectors: one row of comma-separated reals per line
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t this_cols = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        values.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error("ingest " + path + ": line " + std::to_string(lineno) +
                                 ": cannot parse '" + cell + "' as a number");
      }
      ++this_cols;
    }
    if (cols == 0) cols = this_cols;
    if (this_cols != cols)
      throw std::runtime_error("ingest " + path + ": line " + std::to_string(lineno) +
                               ": ragged row (" + std::to_string(this_cols) + " columns, expected " +
                               std::to_string(cols) + ")");
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("ingest " + path + ": no data rows");
  d.kind = DataKind::vectors;
  d.vectors = Tensor({rows, cols}, std::move(values));
  return d;
}

}  // namespace occ
