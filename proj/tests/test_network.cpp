#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "occ/network.hpp"
#include "occ/serialize.hpp"
#include "test_util.hpp"

using namespace occ;
using occ::testutil::random_tensor;

namespace {

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.input_dim = 10;
  cfg.encoder_widths = {8, 6};
  cfg.head_depth = 2;
  cfg.head_hidden_width = 8;
  cfg.head_output_dim = 4;
  cfg.seed = 42;
  return cfg;
}

Param& find_param(ModelBundle& model, const std::string& name) {
  for (Param& p : model.params)
    if (p.name == name) return p;
  throw std::logic_error("no such param: " + name);
}

}  // namespace

TEST_CASE("init: deterministic given the seed, zero biases") {
  NetworkConfig cfg = small_config();
  ModelBundle a = init(cfg);
  ModelBundle b = init(cfg);
  REQUIRE(a.params.size() == b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].name == b.params[i].name);
    CHECK(a.params[i].value.data() == b.params[i].value.data());
    if (a.params[i].kind == ParamKind::bias)
      for (std::size_t j = 0; j < a.params[i].value.size(); ++j)
        CHECK(a.params[i].value[j] == 0.0);
  }

  cfg.seed = 43;
  ModelBundle c = init(cfg);
  CHECK(c.params[0].value.data() != a.params[0].value.data());
}

TEST_CASE("init: He std within 10% on a 512x512 weight") {
  NetworkConfig cfg;
  cfg.input_dim = 512;
  cfg.encoder_widths = {512};
  cfg.head_depth = 0;
  cfg.seed = 7;
  ModelBundle model = init(cfg);
  const Tensor& w = model.params[0].value;
  REQUIRE(w.rows() == 512);
  double mean = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) mean += w[i];
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) var += (w[i] - mean) * (w[i] - mean);
  var /= static_cast<double>(w.size());
  double target = std::sqrt(2.0 / 512.0);
  CHECK(std::abs(std::sqrt(var) - target) < 0.1 * target);
}

TEST_CASE("init: zero-width layers are rejected") {
  NetworkConfig cfg = small_config();
  cfg.encoder_widths = {8, 0};
  CHECK_THROWS_AS(init(cfg), std::invalid_argument);
  NetworkConfig cfg2 = small_config();
  cfg2.input_dim = 0;
  CHECK_THROWS_AS(init(cfg2), std::invalid_argument);
}

TEST_CASE("forward_f: batch independence, output width, determinism") {
  ModelBundle model = init(small_config());
  Rng rng(1);
  Tensor batch = random_tensor({8, 10}, rng);
  Tensor out = forward_f(model, batch);
  CHECK(out.rows() == 8);
  CHECK(out.cols() == 6);  // last encoder width

  // any row is invariant to its batch context (f has no batch coupling)
  for (std::size_t r = 0; r < 8; ++r) {
    Tensor one({1, 10});
    for (std::size_t j = 0; j < 10; ++j) one.at(0, j) = batch.at(r, j);
    Tensor single = forward_f(model, one);
    for (std::size_t j = 0; j < 6; ++j) CHECK(single.at(0, j) == out.at(r, j));
  }

  Tensor again = forward_f(model, batch);
  CHECK(again.data() == out.data());

  // identical inputs produce identical rows
  Tensor dup({2, 10});
  for (std::size_t j = 0; j < 10; ++j) dup.at(0, j) = dup.at(1, j) = batch.at(0, j);
  Tensor dup_out = forward_f(model, dup);
  for (std::size_t j = 0; j < 6; ++j) CHECK(dup_out.at(0, j) == dup_out.at(1, j));
}

TEST_CASE("forward_gf: identity head reduces to forward_f bit-exactly") {
  NetworkConfig cfg = small_config();
  cfg.head_depth = 0;
  ModelBundle model = init(cfg);
  Rng rng(2);
  Tensor x = random_tensor({5, 10}, rng);
  Tensor f = forward_f(model, x);
  Tensor gf = forward_gf(model, x);
  REQUIRE(f.shape() == gf.shape());
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == gf[i]);
}

TEST_CASE("forward_gf: head output width and eval-mode batch independence") {
  ModelBundle model = init(small_config());
  Rng rng(3);
  // push the running stats away from the init values first
  Tensor warm = random_tensor({16, 10}, rng);
  forward_gf_train(model, warm);

  Tensor batch = random_tensor({16, 10}, rng);
  Tensor out = forward_gf(model, batch);
  CHECK(out.cols() == 4);

  Tensor one({1, 10});
  for (std::size_t j = 0; j < 10; ++j) one.at(0, j) = batch.at(5, j);
  Tensor single = forward_gf(model, one);
  for (std::size_t j = 0; j < 4; ++j) CHECK(single.at(0, j) == out.at(5, j));
}

TEST_CASE("forward_gf: train mode with a batch of one errors when the head has batch norm") {
  ModelBundle model = init(small_config());
  Tensor one({1, 10});
  CHECK_THROWS_AS(forward_gf_train(model, one), std::invalid_argument);
}

TEST_CASE("forward_q: zero classifier weights give the uniform distribution") {
  ModelBundle model = init(small_config());
  for (auto name : {"q.w", "q.b"}) {
    Tensor& v = find_param(model, name).value;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.0;
  }
  Rng rng(4);
  Tensor x = random_tensor({3, 10}, rng);
  Tensor logits = forward_q(model, x);
  REQUIRE(logits.rows() == 3);
  REQUIRE(logits.cols() == 4);
  for (std::size_t r = 0; r < 3; ++r) {
    double denom = 0.0;
    for (std::size_t j = 0; j < 4; ++j) denom += std::exp(logits.at(r, j));
    double total = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      double p = std::exp(logits.at(r, j)) / denom;
      CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
      total += p;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("save/load: bit-exact round trip") {
  testutil::TempDir tmp("model");
  ModelBundle model = init(small_config());
  // give the running stats non-trivial values
  Rng rng(5);
  forward_gf_train(model, random_tensor({8, 10}, rng));
  model.meta.objective = Objective::rotation;
  model.meta.step = 321;

  std::string path = tmp.path("m.occ");
  save_model(model, path);
  ModelBundle loaded = load_model(path);
  CHECK(loaded.config == model.config);
  CHECK(loaded.meta.objective == Objective::rotation);
  CHECK(loaded.meta.step == 321);
  REQUIRE(loaded.params.size() == model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i)
    CHECK(loaded.params[i].value.data() == model.params[i].value.data());
  REQUIRE(loaded.bn_states.size() == model.bn_states.size());
  for (std::size_t i = 0; i < model.bn_states.size(); ++i) {
    CHECK(loaded.bn_states[i].running_mean.data() == model.bn_states[i].running_mean.data());
    CHECK(loaded.bn_states[i].running_var.data() == model.bn_states[i].running_var.data());
  }

  // and the write itself is deterministic
  std::string path2 = tmp.path("m2.occ");
  save_model(model, path2);
  CHECK(read_file(path) == read_file(path2));
}

TEST_CASE("save/load: corruption and version errors are explicit") {
  testutil::TempDir tmp("model_bad");
  ModelBundle model = init(small_config());
  std::string path = tmp.path("m.occ");
  save_model(model, path);

  SUBCASE("bad magic") {
    auto bytes = read_file(path);
    bytes[0] = 'Z';
    bytes.resize(bytes.size() - 4);
    std::uint32_t crc = crc32_of(bytes.data(), bytes.size());
    for (int i = 0; i < 4; ++i)
      bytes.push_back(static_cast<std::uint8_t>((crc >> (8 * i)) & 0xff));
    write_file(path, bytes);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("magic"), std::runtime_error);
  }
  SUBCASE("newer version") {
    auto bytes = read_file(path);
    bytes[4] = 0xff;  // version little-endian low byte
    bytes.resize(bytes.size() - 4);
    std::uint32_t crc = crc32_of(bytes.data(), bytes.size());
    for (int i = 0; i < 4; ++i)
      bytes.push_back(static_cast<std::uint8_t>((crc >> (8 * i)) & 0xff));
    write_file(path, bytes);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("version"), std::runtime_error);
  }
  SUBCASE("flipped payload byte") {
    auto bytes = read_file(path);
    bytes[bytes.size() / 2] ^= 0x01;
    write_file(path, bytes);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("checksum"), std::runtime_error);
  }
  SUBCASE("truncated") {
    auto bytes = read_file(path);
    bytes.resize(bytes.size() / 3);
    write_file(path, bytes);
    CHECK_THROWS(load_model(path));
  }
}
