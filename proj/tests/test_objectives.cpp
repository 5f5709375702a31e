#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "occ/objectives.hpp"
#include "test_util.hpp"

using namespace occ;
using occ::testutil::fd_gradient;
using occ::testutil::max_rel_err;
using occ::testutil::random_images;
using occ::testutil::random_tensor;

namespace {

NetworkConfig tiny_config(std::size_t input_dim, std::uint64_t seed = 11) {
  NetworkConfig cfg;
  cfg.input_dim = input_dim;
  cfg.encoder_widths = {6, 5};
  cfg.head_depth = 1;
  cfg.head_hidden_width = 6;
  cfg.head_output_dim = 4;
  cfg.seed = seed;
  return cfg;
}

AugmentPlan no_op_plan() {
  AugmentPlan plan;
  plan.view.crop_scale_min = plan.view.crop_scale_max = 1.0;
  plan.view.hflip_prob = 0.0;
  plan.view.brightness_jitter = 0.0;
  plan.view.contrast_jitter = 0.0;
  plan.view.grayscale_prob = 0.0;
  plan.view.blur_sigma_min = plan.view.blur_sigma_max = 0.0;
  plan.view.vec_noise_sigma = 0.0;
  plan.view.vec_scale_jitter = 0.0;
  return plan;
}

double contrastive_value(const Tensor& anchors, const Tensor& positives, double tau,
                         bool symmetric = false) {
  Tape tape;
  ContrastiveBatch batch{anchors, positives, tau, symmetric};
  return tape.value(contrastive_loss(tape, batch))[0];
}

}  // namespace

TEST_CASE("rotation loss: zero classifier weights give ln 4") {
  ModelBundle model = init(tiny_config(16));
  for (Param& p : model.params)
    if (p.name == "q.w" || p.name == "q.b")
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.0;

  Rng rng(1);
  ImageBatch base = random_images(3, 1, 4, rng);
  Tape tape;
  ModelGraph graph(tape, model);
  Rng aug(2);
  NodeId loss = rotation_loss(tape, graph, no_op_plan(), base, aug);
  CHECK(tape.value(loss)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("rotation loss: invariant to permuting the base batch") {
  ModelBundle model = init(tiny_config(16, 3));
  Rng rng(4);
  ImageBatch base = random_images(4, 1, 4, rng);
  std::vector<std::size_t> perm{2, 0, 3, 1};
  ImageBatch permuted = base.slice(perm);

  auto eval = [&](const ImageBatch& imgs) {
    // fresh model copy per call: train-mode batch norm updates running stats
    ModelBundle m = model;
    Tape tape;
    ModelGraph graph(tape, m);
    Rng aug(5);
    return tape.value(rotation_loss(tape, graph, no_op_plan(), imgs, aug))[0];
  };
  CHECK(eval(base) == doctest::Approx(eval(permuted)).epsilon(1e-9));
}

TEST_CASE("rotation loss: gradient matches finite differences on a 2-image 4x4 instance") {
  ModelBundle model = init(tiny_config(16, 6));
  Rng rng(7);
  ImageBatch base = random_images(2, 1, 4, rng);
  Rng aug(8);
  RotationBatch rb = make_rotation_batch(no_op_plan(), base, aug);

  Tape tape;
  ModelGraph graph(tape, model);
  auto grads = tape.backward(rotation_loss(tape, graph, rb));

  for (std::size_t p = 0; p < model.params.size(); ++p) {
    auto eval = [&]() {
      ModelBundle m = model;  // keep running stats fixed for the probe point
      Tape t;
      ModelGraph g(t, m);
      return t.value(rotation_loss(t, g, rb))[0];
    };
    auto fd = fd_gradient(eval, model.params[p].value.data());
    CHECK_MESSAGE(max_rel_err(graph.param_grads(grads)[p], fd, 1e-5) < 1e-4,
                  "param ", model.params[p].name);
  }
}

TEST_CASE("contrastive loss: closed-form two-instance cases") {
  // all four embeddings the same unit vector: positive and negative logits equal
  Tensor u({2, 3});
  u.at(0, 0) = 1.0;
  u.at(1, 0) = 1.0;
  CHECK(contrastive_value(u, u, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // positive cosine 1, negative cosine -1: loss = ln(1 + e^-2)
  Tensor pm({2, 3});
  pm.at(0, 0) = 1.0;
  pm.at(1, 0) = -1.0;
  CHECK(contrastive_value(pm, pm, 1.0) ==
        doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-12));
}

TEST_CASE("contrastive loss: contract violations") {
  Tensor one({1, 3}, {1.0, 0.0, 0.0});
  Tape tape;
  ContrastiveBatch bad{one, one, 1.0, false};
  CHECK_THROWS_AS(contrastive_loss(tape, bad), std::invalid_argument);

  Tensor two({2, 3});
  two.at(0, 0) = 1.0;
  two.at(1, 1) = 1.0;
  ContrastiveBatch bad_tau{two, two, 0.0, false};
  CHECK_THROWS_AS(contrastive_loss(tape, bad_tau), std::invalid_argument);
}

TEST_CASE("contrastive loss: gradient w.r.t. raw embeddings matches finite differences") {
  Rng rng(9);
  Tensor anchors = random_tensor({4, 3}, rng);
  Tensor positives = random_tensor({4, 3}, rng);

  Tape tape;
  NodeId a = tape.leaf(anchors, true);
  NodeId p = tape.leaf(positives, true);
  auto grads = tape.backward(contrastive_loss(tape, a, p, 0.2));

  auto eval = [&]() { return contrastive_value(anchors, positives, 0.2); };
  CHECK(max_rel_err(grads[a], fd_gradient(eval, anchors.data()), 1e-5) < 1e-4);
  CHECK(max_rel_err(grads[p], fd_gradient(eval, positives.data()), 1e-5) < 1e-4);
}

TEST_CASE("contrastive loss: invariances") {
  Rng rng(10);
  std::size_t m = 6, d = 4;
  Tensor anchors = random_tensor({m, d}, rng);
  Tensor positives = random_tensor({m, d}, rng);
  double base = contrastive_value(anchors, positives, 0.2);

  SUBCASE("simultaneous permutation of instance indices") {
    std::vector<std::size_t> perm{3, 1, 5, 0, 4, 2};
    Tensor pa({m, d}), pp({m, d});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        pa.at(i, j) = anchors.at(perm[i], j);
        pp.at(i, j) = positives.at(perm[i], j);
      }
    CHECK(contrastive_value(pa, pp, 0.2) == doctest::Approx(base).epsilon(1e-12));
  }

  SUBCASE("common orthogonal transform of all rows") {
    // Gram-Schmidt on a random matrix gives the rotation
    Tensor q = random_tensor({d, d}, rng);
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t prev = 0; prev < c; ++prev) {
        double dot = 0.0;
        for (std::size_t r = 0; r < d; ++r) dot += q.at(r, c) * q.at(r, prev);
        for (std::size_t r = 0; r < d; ++r) q.at(r, c) -= dot * q.at(r, prev);
      }
      double norm = 0.0;
      for (std::size_t r = 0; r < d; ++r) norm += q.at(r, c) * q.at(r, c);
      norm = std::sqrt(norm);
      for (std::size_t r = 0; r < d; ++r) q.at(r, c) /= norm;
    }
    auto rotate = [&](const Tensor& x) {
      Tensor out({m, d});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < d; ++k) acc += x.at(i, k) * q.at(k, j);
          out.at(i, j) = acc;
        }
      return out;
    };
    CHECK(contrastive_value(rotate(anchors), rotate(positives), 0.2) ==
          doctest::Approx(base).epsilon(1e-9));
  }

  SUBCASE("positive rescaling of an individual raw row") {
    Tensor scaled = anchors;
    for (std::size_t j = 0; j < d; ++j) scaled.at(2, j) *= 37.5;
    CHECK(contrastive_value(scaled, positives, 0.2) == doctest::Approx(base).epsilon(1e-9));
  }

  SUBCASE("loss is non-negative") {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor a2 = random_tensor({3, d}, rng);
      Tensor p2 = random_tensor({3, d}, rng);
      CHECK(contrastive_value(a2, p2, 0.5) >= 0.0);
    }
  }
}

TEST_CASE("contrastive loss: symmetric flag averages the two directions") {
  Rng rng(11);
  Tensor anchors = random_tensor({4, 3}, rng);
  Tensor positives = random_tensor({4, 3}, rng);
  double fwd = contrastive_value(anchors, positives, 0.3);
  double bwd = contrastive_value(positives, anchors, 0.3);
  double sym = contrastive_value(anchors, positives, 0.3, true);
  CHECK(sym == doctest::Approx(0.5 * (fwd + bwd)).epsilon(1e-12));
}

TEST_CASE("assemble_distaug_batch: identity set reduces to vanilla sampling") {
  Rng rng(12);
  ImageBatch imgs = random_images(6, 1, 4, rng);
  ExpandedBatch ex = expand_distribution(imgs, {DistTransform::identity});
  Rng pick(13);
  SampledViews views = assemble_distaug_batch(ex, 4, no_op_plan(), pick);
  CHECK(views.view_a.count == 4);
  for (std::size_t idx : views.picked) CHECK(idx < 6);
  // without replacement
  std::set<std::size_t> uniq(views.picked.begin(), views.picked.end());
  CHECK(uniq.size() == 4);
}

TEST_CASE("assemble_distaug_batch: one image under four rotations fills the batch") {
  Rng rng(14);
  ImageBatch one = random_images(1, 1, 4, rng);
  std::vector<DistTransform> rotations{DistTransform::identity, DistTransform::rot90,
                                       DistTransform::rot180, DistTransform::rot270};
  ExpandedBatch ex = expand_distribution(one, rotations);
  Rng pick(15);
  SampledViews views = assemble_distaug_batch(ex, 4, no_op_plan(), pick);
  std::set<std::size_t> uniq(views.picked.begin(), views.picked.end());
  CHECK(uniq == std::set<std::size_t>{0, 1, 2, 3});

  CHECK_THROWS_AS(assemble_distaug_batch(ex, 5, no_op_plan(), pick), std::invalid_argument);
}

TEST_CASE("assemble_distaug_batch: sampling is uniform over (instance, transform) pairs") {
  Rng rng(16);
  ImageBatch imgs = random_images(2, 1, 4, rng);
  std::vector<DistTransform> rotations{DistTransform::identity, DistTransform::rot90,
                                       DistTransform::rot180, DistTransform::rot270};
  ExpandedBatch ex = expand_distribution(imgs, rotations);  // 8 instances
  AugmentPlan plan = no_op_plan();

  std::vector<std::size_t> counts(8, 0);
  Rng pick(17);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    SampledViews views = assemble_distaug_batch(ex, 2, plan, pick);
    for (std::size_t idx : views.picked) ++counts[idx];
  }
  // each instance appears in a batch with probability M/N = 1/4
  double expected = trials * 2.0 / 8.0;
  double sigma = std::sqrt(trials * 0.25 * 0.75);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(std::abs(static_cast<double>(counts[i]) - expected) <= 3.0 * sigma);
}
