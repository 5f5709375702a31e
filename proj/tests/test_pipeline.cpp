#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "occ/pipeline.hpp"
#include "occ/serialize.hpp"
#include "test_util.hpp"

using namespace occ;
namespace fs = std::filesystem;

namespace {

PipelineConfig vector_config(const std::string& out_dir) {
  std::ostringstream os;
  os << "[dataset]\nkind = gaussian_blobs\ndim = 4\nn_train = 32\nn_test_in = 12\n"
        "n_test_out = 12\nblob_distance = 5.0\n"
     << "[network]\nencoder_widths = 8 6\nhead_depth = 1\nhead_hidden_width = 8\n"
        "head_output_dim = 4\n"
     << "[objective]\nkind = contrastive\n"
     << "[optimizer]\nepochs = 3\nbatch_size = 8\n"
     << "[evaluate]\nseeds = 1 2\nmmd_uniform_samples = 64\n"
     << "[pipeline]\nout_dir = " << out_dir << "\nseed = 3\n";
  return PipelineConfig::parse(os.str());
}

PipelineConfig shapes_config(const std::string& out_dir) {
  std::ostringstream os;
  os << "[dataset]\nkind = shapes_images\nimage_size = 8\nn_train = 24\nn_test_in = 8\n"
        "n_test_out = 8\n"
     << "[network]\nencoder_widths = 12 6\nhead_depth = 1\nhead_hidden_width = 8\n"
        "head_output_dim = 4\n"
     << "[objective]\nkind = contrastive_distaug\n"
     << "[optimizer]\nepochs = 2\nbatch_size = 16\n"
     << "[evaluate]\nseeds = 1\nmmd_uniform_samples = 64\n"
     << "[explain]\nsamples = 0 9\nsteps = 16\n"
     << "[pipeline]\nout_dir = " << out_dir << "\nseed = 4\n";
  return PipelineConfig::parse(os.str());
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(static_cast<bool>(f));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ls(line);
  std::string cell;
  while (std::getline(ls, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("full pipeline produces the advertised artifacts and summary") {
  testutil::TempDir tmp("pipe_all");
  PipelineConfig cfg = vector_config(tmp.path("out"));
  run_pipeline(cfg, Stage::all);

  ArtifactPaths paths(tmp.path("out"));
  for (const std::string& p :
       {paths.train_data, paths.test_in_data, paths.test_out_data, paths.model(1),
        paths.model(2), paths.reps("train", 1), paths.reps("test_in", 2), paths.scores(1),
        paths.summary})
    CHECK_MESSAGE(fs::exists(p), p);

  auto lines = read_lines(paths.summary);
  REQUIRE(lines.size() == 6);  // header, 2 seeds, mean, std, ensemble
  CHECK(lines[0] == "seed,auc_train,auc_test,mmd_f,mmd_gf");
  CHECK(split_csv(lines[3])[0] == "mean");
  CHECK(split_csv(lines[5])[0] == "ensemble");

  // the mean row reproduces the arithmetic mean of the seed rows
  double auc1 = std::stod(split_csv(lines[1])[2]);
  double auc2 = std::stod(split_csv(lines[2])[2]);
  double mean = std::stod(split_csv(lines[3])[2]);
  CHECK(std::abs(mean - 0.5 * (auc1 + auc2)) < 1e-12);
  CHECK(auc1 >= 0.0);
  CHECK(auc1 <= 1.0);

  // KDE scores over the train set are finite (log-space never NaNs)
  for (const auto& line : read_lines(paths.train_scores(1))) {
    if (line.rfind("sample", 0) == 0 || line.empty() || line[0] == '#') continue;
    double v = std::stod(split_csv(line)[1]);
    CHECK(std::isfinite(v));
  }

  // lock is released after the run
  CHECK_FALSE(fs::exists(paths.lock));
}

TEST_CASE("missing prerequisites are reported with exit-code-3 semantics") {
  testutil::TempDir tmp("pipe_missing");
  PipelineConfig cfg = vector_config(tmp.path("out"));
  CHECK_THROWS_AS(run_pipeline(cfg, Stage::train), MissingArtifact);
  CHECK_THROWS_AS(run_pipeline(cfg, Stage::embed), MissingArtifact);
  run_pipeline(cfg, Stage::gen);
  CHECK_THROWS_AS(run_pipeline(cfg, Stage::fit), MissingArtifact);
  CHECK_THROWS_AS(run_pipeline(cfg, Stage::score), MissingArtifact);
}

TEST_CASE("stages are deterministic and idempotent at the byte level") {
  testutil::TempDir tmp("pipe_det");
  PipelineConfig a = vector_config(tmp.path("a"));
  PipelineConfig b = vector_config(tmp.path("b"));
  StageOverrides one_seed;
  one_seed.seed = 1;
  for (PipelineConfig* cfg : {&a, &b}) {
    run_pipeline(*cfg, Stage::gen);
    run_pipeline(*cfg, Stage::train, one_seed);
    run_pipeline(*cfg, Stage::embed, one_seed);
    run_pipeline(*cfg, Stage::fit, one_seed);
    run_pipeline(*cfg, Stage::score, one_seed);
  }
  ArtifactPaths pa(tmp.path("a")), pb(tmp.path("b"));
  CHECK(read_file(pa.train_data) == read_file(pb.train_data));
  CHECK(read_file(pa.model(1)) == read_file(pb.model(1)));
  CHECK(read_file(pa.reps("train", 1)) == read_file(pb.reps("train", 1)));
  CHECK(read_file(pa.detector("kde", 1)) == read_file(pb.detector("kde", 1)));
  CHECK(read_file(pa.scores(1)) == read_file(pb.scores(1)));

  // re-running a stage overwrites with identical bytes
  auto before = read_file(pa.reps("train", 1));
  run_pipeline(a, Stage::embed, one_seed);
  CHECK(read_file(pa.reps("train", 1)) == before);
}

TEST_CASE("detector subset and external representations") {
  testutil::TempDir tmp("pipe_fit");
  PipelineConfig cfg = vector_config(tmp.path("out"));
  run_pipeline(cfg, Stage::gen);
  StageOverrides one_seed;
  one_seed.seed = 1;
  run_pipeline(cfg, Stage::train, one_seed);
  run_pipeline(cfg, Stage::embed, one_seed);

  SUBCASE("clean-subset fitting") {
    PipelineConfig sub = cfg;
    sub.set("detector.train_subset", "8");
    run_pipeline(sub, Stage::fit, one_seed);
    Detector det = load_detector(ArtifactPaths(tmp.path("out")).detector("kde", 1));
    CHECK(det.kde.references.rows() == 8);
  }

  SUBCASE("external representations replace the default path") {
    ArtifactPaths paths(tmp.path("out"));
    StageOverrides ov = one_seed;
    ov.reps_path = paths.reps("train", 1);
    ov.detector = "gde";
    run_pipeline(cfg, Stage::fit, ov);
    CHECK(fs::exists(paths.detector("gde", 1)));
  }

  SUBCASE("ocsvm detector override flows through scoring") {
    StageOverrides ov = one_seed;
    ov.detector = "ocsvm";
    run_pipeline(cfg, Stage::fit, ov);
    run_pipeline(cfg, Stage::score, ov);
    CHECK(fs::exists(ArtifactPaths(tmp.path("out")).scores(1)));
  }
}

TEST_CASE("mmd stage emits the sweep rows") {
  testutil::TempDir tmp("pipe_mmd");
  PipelineConfig cfg = vector_config(tmp.path("out"));
  run_pipeline(cfg, Stage::gen);
  StageOverrides ov;
  ov.seed = 1;
  ov.batch_sizes = std::vector<std::size_t>{4, 8};
  run_pipeline(cfg, Stage::mmd, ov);
  auto lines = read_lines(ArtifactPaths(tmp.path("out")).mmd_csv);
  REQUIRE(lines.size() == 5);  // header + 2 sizes x (f, gf)
  CHECK(lines[0] == "batch_size_or_tag,mmd");
  CHECK(lines[1].rfind("bs4_f_seed1", 0) == 0);
  CHECK(lines[4].rfind("bs8_gf_seed1", 0) == 0);
}

TEST_CASE("explain stage writes attribution grids for image data") {
  testutil::TempDir tmp("pipe_explain");
  PipelineConfig cfg = shapes_config(tmp.path("out"));
  run_pipeline(cfg, Stage::gen);
  StageOverrides ov;
  ov.seed = 1;
  run_pipeline(cfg, Stage::train, ov);
  run_pipeline(cfg, Stage::embed, ov);
  run_pipeline(cfg, Stage::explain, ov);

  ArtifactPaths paths(tmp.path("out"));
  for (std::size_t id : {std::size_t{0}, std::size_t{9}}) {
    auto lines = read_lines(paths.attribution(id, 1));
    REQUIRE(lines.size() == 8);  // 8x8 grid
    CHECK(split_csv(lines[0]).size() == 8);
  }

  StageOverrides bad = ov;
  bad.samples = std::vector<std::size_t>{999};
  CHECK_THROWS_AS(run_pipeline(cfg, Stage::explain, bad), ConfigError);
}

TEST_CASE("the output directory lock is exclusive") {
  testutil::TempDir tmp("pipe_lock");
  PipelineConfig cfg = vector_config(tmp.path("out"));
  fs::create_directories(tmp.path("out"));
  {
    std::ofstream f(tmp.path("out") + "/.lock");
  }
  CHECK_THROWS_WITH_AS(run_pipeline(cfg, Stage::gen), doctest::Contains("lock"),
                       std::runtime_error);
  fs::remove(tmp.path("out") + "/.lock");
  run_pipeline(cfg, Stage::gen);  // works once the stale lock is gone
}
