#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "occ/explain.hpp"
#include "test_util.hpp"

using namespace occ;
using occ::testutil::fd_gradient;
using occ::testutil::max_rel_err;
using occ::testutil::random_tensor;

namespace {

// encoder that computes the identity map: one affine layer, identity weight
ModelBundle identity_encoder(std::size_t d) {
  NetworkConfig cfg;
  cfg.input_dim = d;
  cfg.encoder_widths = {d};
  cfg.head_depth = 0;
  cfg.seed = 1;
  ModelBundle model = init(cfg);
  for (Param& p : model.params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.0;
    if (p.name == "f.0.w")
      for (std::size_t i = 0; i < d; ++i) p.value.at(i, i) = 1.0;
  }
  return model;
}

}  // namespace

TEST_CASE("kde_input_gradient: identity encoder with one reference") {
  std::size_t d = 3;
  ModelBundle model = identity_encoder(d);
  Tensor ref({1, d}, {0.2, -0.4, 0.7});
  double gamma = 1.7;
  KdeModel kde = fit_kde(ref, gamma);

  Tensor x({1, d}, {1.0, 0.5, -0.3});
  Attribution attr = kde_input_gradient(model, kde, x);
  for (std::size_t j = 0; j < d; ++j) {
    double expect = -2.0 * gamma * (x.at(0, j) - ref.at(0, j));
    CHECK(attr.values[j] == doctest::Approx(expect).epsilon(1e-10));
  }

  // at the reference itself the kernel peaks: zero gradient
  Attribution at_ref = kde_input_gradient(model, kde, ref);
  for (std::size_t j = 0; j < d; ++j) CHECK(at_ref.values[j] == 0.0);

  // score value is the log of the one-point kernel density
  double d2 = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double c = x.at(0, j) - ref.at(0, j);
    d2 += c * c;
  }
  CHECK(attr.score_at_input ==
        doctest::Approx(-gamma * d2 - std::log(gamma)).epsilon(1e-12));
}

TEST_CASE("kde_input_gradient: full pipeline matches finite differences") {
  NetworkConfig cfg;
  cfg.input_dim = 8;
  cfg.encoder_widths = {6, 4};
  cfg.head_depth = 0;
  cfg.seed = 3;
  ModelBundle model = init(cfg);

  Rng rng(4);
  Tensor train = random_tensor({12, 8}, rng);
  KdeModel kde = fit_kde(forward_f(model, train));

  Tensor x = random_tensor({1, 8}, rng);
  Attribution attr = kde_input_gradient(model, kde, x);

  Tensor xv = x;
  auto eval = [&]() { return score_kde(kde, forward_f(model, xv))[0]; };
  CHECK(max_rel_err(attr.values, fd_gradient(eval, xv.data()), 1e-6) < 1e-4);
}

TEST_CASE("kde_input_gradient: raw mode rescales by the density") {
  std::size_t d = 4;
  ModelBundle model = identity_encoder(d);
  Rng rng(5);
  KdeModel kde = fit_kde(random_tensor({6, d}, rng), 0.9);
  Tensor x = random_tensor({1, d}, rng);

  Attribution log_attr = kde_input_gradient(model, kde, x, KdeScoreMode::log);
  Attribution raw_attr = kde_input_gradient(model, kde, x, KdeScoreMode::raw);
  double density = std::exp(log_attr.score_at_input);
  CHECK(raw_attr.score_at_input == doctest::Approx(density).epsilon(1e-12));
  for (std::size_t j = 0; j < d; ++j)
    CHECK(raw_attr.values[j] == doctest::Approx(density * log_attr.values[j]).epsilon(1e-10));
}

TEST_CASE("kde_input_gradient: dimension mismatches are rejected") {
  ModelBundle model = identity_encoder(3);
  Rng rng(6);
  KdeModel kde = fit_kde(random_tensor({4, 2}, rng), 1.0);  // wrong feature width
  Tensor x({1, 3});
  CHECK_THROWS_AS(kde_input_gradient(model, kde, x), std::invalid_argument);
}

TEST_CASE("integrated_gradients: exact for linear scores at any step count") {
  std::size_t d = 5;
  Rng rng(7);
  Tensor w = random_tensor({d}, rng);
  ScoreFn linear = [&](const Tensor& x) {
    double v = 0.0;
    for (std::size_t i = 0; i < d; ++i) v += w[i] * x[i];
    return ScoreGrad{v, w};
  };
  Tensor x = random_tensor({d}, rng);
  Tensor zero = Tensor::zeros({d});
  for (int steps : {1, 7, 32}) {
    Attribution attr = integrated_gradients(linear, x, zero, steps);
    for (std::size_t i = 0; i < d; ++i)
      CHECK(attr.values[i] == doctest::Approx(w[i] * x[i]).epsilon(1e-12));
  }
}

TEST_CASE("integrated_gradients: zero at the baseline, errors on misuse") {
  ScoreFn quad = [](const Tensor& x) {
    double v = 0.0;
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      v += x[i] * x[i];
      g[i] = 2.0 * x[i];
    }
    return ScoreGrad{v, g};
  };
  Tensor x({3}, {1.0, -2.0, 0.5});
  Attribution attr = integrated_gradients(quad, x, x, 16);
  for (std::size_t i = 0; i < 3; ++i) CHECK(attr.values[i] == 0.0);

  CHECK_THROWS_AS(integrated_gradients(quad, x, Tensor::zeros({2}), 8),
                  std::invalid_argument);
  CHECK_THROWS_AS(integrated_gradients(quad, x, x, 0), std::invalid_argument);
}

TEST_CASE("integrated_gradients: completeness gap shrinks with steps on a smooth score") {
  ScoreFn smooth = [](const Tensor& x) {
    // sum of gaussians: smooth and curved
    double v = 0.0;
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      v += std::exp(-x[i] * x[i]);
      g[i] = -2.0 * x[i] * std::exp(-x[i] * x[i]);
    }
    return ScoreGrad{v, g};
  };
  Rng rng(8);
  Tensor x = random_tensor({4}, rng);
  Tensor zero = Tensor::zeros({4});
  auto gap = [&](int steps) {
    Attribution attr = integrated_gradients(smooth, x, zero, steps);
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) total += attr.values[i];
    return std::abs(total - (attr.score_at_input - attr.score_at_baseline));
  };
  double g16 = gap(16), g64 = gap(64), g256 = gap(256);
  CHECK(g64 < g16);
  CHECK(g256 < g64);
  CHECK(g256 < 1e-5);
}

TEST_CASE("attributions vanish for coordinates the score ignores") {
  ScoreFn partial = [](const Tensor& x) {
    Tensor g = Tensor::zeros(x.shape());
    g[0] = std::cos(x[0]);
    return ScoreGrad{std::sin(x[0]), g};
  };
  Tensor x({3}, {0.4, 5.0, -2.0});
  Attribution attr = integrated_gradients(partial, x, Tensor::zeros({3}), 32);
  CHECK(attr.values[1] == 0.0);
  CHECK(attr.values[2] == 0.0);
  CHECK(attr.values[0] != 0.0);
}

TEST_CASE("ascii heatmap renders the grid") {
  Tensor v({4}, {0.0, 0.5, 0.75, 1.0});
  std::string art = ascii_heatmap(v, 2, 2);
  CHECK(art.size() == 6);  // 2x2 plus newlines
  CHECK(art[0] == ' ');    // minimum maps to the lightest shade
  CHECK_THROWS_AS(ascii_heatmap(v, 3, 3), std::invalid_argument);
}
