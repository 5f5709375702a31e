#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <stdexcept>
#include <utility>

#include "occ/augment.hpp"
#include "test_util.hpp"

using namespace occ;
using occ::testutil::random_images;

namespace {

bool same_pixels(const ImageBatch& a, const ImageBatch& b) {
  return a.count == b.count && a.channels == b.channels && a.height == b.height &&
         a.width == b.width && a.pixels == b.pixels;
}

AugmentPlan degenerate_plan() {
  AugmentPlan plan;
  plan.view.crop_scale_min = plan.view.crop_scale_max = 1.0;
  plan.view.hflip_prob = 0.0;
  plan.view.brightness_jitter = 0.0;
  plan.view.contrast_jitter = 0.0;
  plan.view.grayscale_prob = 0.0;
  plan.view.blur_sigma_min = plan.view.blur_sigma_max = 0.0;
  return plan;
}

}  // namespace

TEST_CASE("rot90: identity, order four, and the 2x2 index convention") {
  Rng rng(21);
  ImageBatch img = random_images(3, 2, 6, rng);
  CHECK(same_pixels(rot90(img, 0), img));

  ImageBatch four = rot90(rot90(rot90(rot90(img, 1), 1), 1), 1);
  CHECK(same_pixels(four, img));

  // [[a,b],[c,d]] rotated once counter-clockwise -> [[b,d],[a,c]]
  ImageBatch two = ImageBatch::empty(1, 1, 2, 2);
  two.at(0, 0, 0, 0) = 0.1;  // a
  two.at(0, 0, 0, 1) = 0.2;  // b
  two.at(0, 0, 1, 0) = 0.3;  // c
  two.at(0, 0, 1, 1) = 0.4;  // d
  ImageBatch r = rot90(two, 1);
  CHECK(r.at(0, 0, 0, 0) == 0.2);
  CHECK(r.at(0, 0, 0, 1) == 0.4);
  CHECK(r.at(0, 0, 1, 0) == 0.1);
  CHECK(r.at(0, 0, 1, 1) == 0.3);
}

TEST_CASE("rot90: non-square input is rejected") {
  ImageBatch rect = ImageBatch::empty(1, 1, 2, 3);
  CHECK_THROWS_AS(rot90(rect, 1), std::invalid_argument);
}

TEST_CASE("rot90 composition obeys the cyclic group") {
  Rng rng(22);
  ImageBatch img = random_images(2, 1, 5, rng);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      CHECK(same_pixels(rot90(rot90(img, a), b), rot90(img, (a + b) % 4)));
}

TEST_CASE("hflip: involution, width one, and row reversal") {
  Rng rng(23);
  ImageBatch img = random_images(2, 3, 4, rng);
  CHECK(same_pixels(hflip(hflip(img)), img));

  ImageBatch thin = ImageBatch::empty(1, 1, 3, 1);
  thin.pixels = {0.2, 0.4, 0.6};
  CHECK(same_pixels(hflip(thin), thin));

  ImageBatch row = ImageBatch::empty(1, 1, 1, 3);
  row.pixels = {0.1, 0.2, 0.3};
  ImageBatch flipped = hflip(row);
  CHECK(flipped.pixels == std::vector<double>{0.3, 0.2, 0.1});
}

TEST_CASE("dihedral relation: rot180 commutes with hflip bit-exactly") {
  Rng rng(24);
  ImageBatch img = random_images(3, 1, 7, rng);
  CHECK(same_pixels(hflip(rot90(img, 2)), rot90(hflip(img), 2)));
}

TEST_CASE("sample_view: degenerate plan reproduces the input") {
  Rng rng(25);
  ImageBatch img = random_images(4, 1, 8, rng);
  AugmentPlan plan = degenerate_plan();
  Rng view_rng(1);
  ImageBatch out = sample_view(plan, img, view_rng);
  REQUIRE(out.pixels.size() == img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(std::abs(out.pixels[i] - img.pixels[i]) < 1e-9);
}

TEST_CASE("sample_view: same seed gives identical output") {
  Rng rng(26);
  ImageBatch img = random_images(3, 1, 8, rng);
  AugmentPlan plan;
  Rng r1(99), r2(99);
  ImageBatch a = sample_view(plan, img, r1);
  ImageBatch b = sample_view(plan, img, r2);
  CHECK(same_pixels(a, b));
}

TEST_CASE("sample_view: output stays in [0,1] under extreme jitter") {
  AugmentPlan plan;
  plan.view.brightness_jitter = 0.9;
  plan.view.contrast_jitter = 0.9;
  plan.view.blur_sigma_max = 2.0;
  Rng data_rng(27), view_rng(28);
  for (int trial = 0; trial < 100; ++trial) {
    ImageBatch img = random_images(10, 1, 6, data_rng);
    ImageBatch out = sample_view(plan, img, view_rng);
    for (double p : out.pixels) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("sample_view: invalid parameter ranges are rejected") {
  Rng rng(29);
  ImageBatch img = random_images(1, 1, 4, rng);
  AugmentPlan plan;
  plan.view.crop_scale_min = 0.0;
  Rng view_rng(1);
  CHECK_THROWS_AS(sample_view(plan, img, view_rng), std::invalid_argument);

  AugmentPlan plan2;
  plan2.view.crop_scale_min = 0.9;
  plan2.view.crop_scale_max = 0.5;
  CHECK_THROWS_AS(sample_view(plan2, img, view_rng), std::invalid_argument);
}

TEST_CASE("expand_distribution: cardinality and labels") {
  Rng rng(30);
  ImageBatch img = random_images(10, 1, 4, rng);
  std::vector<DistTransform> rotations{DistTransform::identity, DistTransform::rot90,
                                       DistTransform::rot180, DistTransform::rot270};
  ExpandedBatch ex = expand_distribution(img, rotations);
  CHECK(ex.images.count == 40);
  REQUIRE(ex.instance_id.size() == 40);

  // every (instance, transform) pair unique, transform-major order
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t i = 0; i < 40; ++i) seen.insert({ex.instance_id[i], ex.transform_id[i]});
  CHECK(seen.size() == 40);
  CHECK(ex.transform_id[0] == 0);
  CHECK(ex.transform_id[39] == 3);
  CHECK(ex.instance_id[10] == 0);  // first image of the rot90 block

  // identity-only expansion is the input itself
  ExpandedBatch idonly = expand_distribution(img, {DistTransform::identity});
  CHECK(same_pixels(idonly.images, img));
  for (std::size_t t : idonly.transform_id) CHECK(t == 0);
}

TEST_CASE("expand_distribution: rotation-symmetric images keep distinct identities") {
  ImageBatch constant = ImageBatch::empty(1, 1, 4, 4);
  for (double& p : constant.pixels) p = 0.5;
  std::vector<DistTransform> rotations{DistTransform::identity, DistTransform::rot90,
                                       DistTransform::rot180, DistTransform::rot270};
  ExpandedBatch ex = expand_distribution(constant, rotations);
  CHECK(ex.images.count == 4);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t i = 0; i < 4; ++i) seen.insert({ex.instance_id[i], ex.transform_id[i]});
  CHECK(seen.size() == 4);  // no deduplication of identical pixel content
}

TEST_CASE("expand_distribution: dist_set validation") {
  Rng rng(31);
  ImageBatch img = random_images(2, 1, 4, rng);
  CHECK_THROWS_AS(expand_distribution(img, {DistTransform::rot90}), std::invalid_argument);
  CHECK_THROWS_AS(expand_distribution(img, {DistTransform::identity, DistTransform::rot90,
                                            DistTransform::rot90}),
                  std::invalid_argument);

  Tensor vec({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(expand_distribution(vec, {DistTransform::identity, DistTransform::rot90}),
                  std::invalid_argument);
  ExpandedVectors ev = expand_distribution(vec, {DistTransform::identity});
  CHECK(ev.rows.rows() == 3);
}

TEST_CASE("vector view augmentation is deterministic and shape preserving") {
  Tensor rows({4, 3});
  Rng fill(32);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = fill.normal();
  AugmentPlan plan;
  Rng r1(7), r2(7);
  Tensor a = sample_view(plan, rows, r1);
  Tensor b = sample_view(plan, rows, r2);
  CHECK(a.shape() == rows.shape());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("transform names round-trip") {
  for (int i = 0; i < 8; ++i) {
    auto t = static_cast<DistTransform>(i);
    CHECK(dist_transform_from_name(dist_transform_name(t)) == t);
  }
  CHECK_THROWS_AS(dist_transform_from_name("rot45"), std::invalid_argument);
}
