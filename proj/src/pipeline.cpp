#include "occ/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "occ/serialize.hpp"

namespace occ {

namespace fs = std::filesystem;

Stage stage_from_name(const std::string& name) {
  if (name == "gen" || name == "gen-data") return Stage::gen;
  if (name == "train") return Stage::train;
  if (name == "embed") return Stage::embed;
  if (name == "fit") return Stage::fit;
  if (name == "score") return Stage::score;
  if (name == "eval") return Stage::eval;
  if (name == "mmd") return Stage::mmd;
  if (name == "explain") return Stage::explain;
  if (name == "all") return Stage::all;
  throw ConfigError("unknown stage: " + name);
}

ArtifactPaths::ArtifactPaths(const std::string& out_dir) : root(out_dir) {
  auto join = [&](const std::string& a, const std::string& b) {
    return (fs::path(a) / b).string();
  };
  dataset_dir = join(root, "dataset");
  models_dir = join(root, "models");
  reps_dir = join(root, "reps");
  detectors_dir = join(root, "detectors");
  report_dir = join(root, "report");
  train_data = join(dataset_dir, "train.oct");
  test_in_data = join(dataset_dir, "test_in.oct");
  test_out_data = join(dataset_dir, "test_out.oct");
  train_manifest = join(dataset_dir, "train_manifest.csv");
  test_manifest = join(dataset_dir, "test_manifest.csv");
  summary = join(report_dir, "summary.csv");
  mmd_csv = join(report_dir, "mmd.csv");
  lock = join(root, ".lock");
}

std::string ArtifactPaths::model(std::uint64_t seed) const {
  return (fs::path(models_dir) / ("model_seed" + std::to_string(seed) + ".occ")).string();
}
std::string ArtifactPaths::loss_trace(std::uint64_t seed) const {
  return (fs::path(models_dir) / ("loss_trace_seed" + std::to_string(seed) + ".csv")).string();
}
std::string ArtifactPaths::reps(const std::string& split, std::uint64_t seed) const {
  return (fs::path(reps_dir) / (split + "_seed" + std::to_string(seed) + ".oct")).string();
}
std::string ArtifactPaths::detector(const std::string& kind, std::uint64_t seed) const {
  return (fs::path(detectors_dir) / (kind + "_seed" + std::to_string(seed) + ".ocd")).string();
}
std::string ArtifactPaths::scores(std::uint64_t seed) const {
  return (fs::path(report_dir) / ("scores_seed" + std::to_string(seed) + ".csv")).string();
}
std::string ArtifactPaths::train_scores(std::uint64_t seed) const {
  return (fs::path(report_dir) / ("train_scores_seed" + std::to_string(seed) + ".csv")).string();
}
std::string ArtifactPaths::attribution(std::size_t sample, std::uint64_t seed) const {
  return (fs::path(report_dir) /
          ("attr_sample" + std::to_string(sample) + "_seed" + std::to_string(seed) + ".csv"))
      .string();
}

namespace {

// One pipeline invocation owns its output directory exclusively.
class DirLock {
 public:
  explicit DirLock(const std::string& path) : path_(path) {
    fs::create_directories(fs::path(path).parent_path());
    fd_ = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw std::runtime_error("output directory is locked (" + path +
                               " exists); remove it if no other run is active");
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

void need_file(const std::string& path) {
  if (!fs::exists(path)) throw MissingArtifact(path);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Dataset load_split(const std::string& path) {
  need_file(path);
  return ingest(path, IngestFormat::binary_tensor);
}

std::vector<std::uint64_t> selected_seeds(const PipelineConfig& cfg, const StageOverrides& ov) {
  if (ov.seed) return {*ov.seed};
  return cfg.seeds();
}

struct ScoreRow {
  std::size_t id;
  double score;
  int label;
};

std::vector<ScoreRow> read_score_rows(const std::string& path) {
  need_file(path);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<ScoreRow> rows;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string a, b, c;
    std::getline(ls, a, ',');
    std::getline(ls, b, ',');
    std::getline(ls, c, ',');
    rows.push_back({std::stoull(a), std::stod(b), std::stoi(c)});
  }
  return rows;
}

void stage_gen(const PipelineConfig& cfg, const ArtifactPaths& paths) {
  gen_data(cfg.dataset_spec(), paths.dataset_dir);
}

void stage_train(const PipelineConfig& cfg, const ArtifactPaths& paths,
                 const StageOverrides& ov) {
  need_file(paths.train_data);
  Dataset train_set = load_split(paths.train_data);
  AugmentPlan plan = cfg.augment_plan();
  fs::create_directories(paths.models_dir);
  for (std::uint64_t seed : selected_seeds(cfg, ov)) {
    ModelBundle model = init(cfg.network_config(train_set.input_dim(), seed));
    TrainRun run = cfg.train_run(seed);
    if (run.checkpoint_every > 0)
      run.checkpoint_dir =
          (fs::path(paths.models_dir) / ("checkpoints_seed" + std::to_string(seed))).string();
    TrainResult result = train(run, model, train_set, plan);
    save_model(model, paths.model(seed));
    write_loss_trace(paths.loss_trace(seed), result.trace);
    std::cout << "trained seed " << seed << ": final epoch loss "
              << (result.epoch_mean_loss.empty() ? 0.0 : result.epoch_mean_loss.back())
              << "\n";
  }
}

void embed_split(const ModelBundle& model, const std::string& data_path,
                 const std::string& reps_path) {
  Dataset data = load_split(data_path);
  save_tensor(forward_f(model, data.as_rows()), reps_path);
}

void stage_embed(const PipelineConfig& cfg, const ArtifactPaths& paths,
                 const StageOverrides& ov) {
  fs::create_directories(paths.reps_dir);
  std::string split = ov.split.value_or("all");
  if (split != "train" && split != "test" && split != "all")
    throw ConfigError("embed: --split must be train or test");
  for (std::uint64_t seed : selected_seeds(cfg, ov)) {
    std::string model_path = ov.model_path.value_or(paths.model(seed));
    need_file(model_path);
    ModelBundle model = load_model(model_path);
    if (split == "train" || split == "all")
      embed_split(model, paths.train_data, paths.reps("train", seed));
    if (split == "test" || split == "all") {
      embed_split(model, paths.test_in_data, paths.reps("test_in", seed));
      embed_split(model, paths.test_out_data, paths.reps("test_out", seed));
    }
  }
}

Tensor detector_fit_reps(const PipelineConfig& cfg, const ArtifactPaths& paths,
                         std::uint64_t seed, const StageOverrides& ov) {
  if (ov.reps_path) {
    need_file(*ov.reps_path);
    Dataset external = ingest(*ov.reps_path, IngestFormat::binary_tensor);
    return external.as_rows();
  }
  need_file(paths.reps("train", seed));
  Tensor reps = load_tensor(paths.reps("train", seed));
  std::size_t subset = cfg.detector_train_subset();
  if (subset == 0) return reps;

  // semi-supervised variant: fit on the first k clean inlier train samples
  need_file(paths.train_manifest);
  std::vector<bool> is_inlier = read_train_manifest(paths.train_manifest);
  if (is_inlier.size() != reps.rows())
    throw ConfigError("detector.train_subset: manifest length does not match representations");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < is_inlier.size() && keep.size() < subset; ++i)
    if (is_inlier[i]) keep.push_back(i);
  if (keep.size() < subset)
    throw ConfigError("detector.train_subset: only " + std::to_string(keep.size()) +
                      " clean inlier samples available");
  Tensor out({keep.size(), reps.cols()});
  for (std::size_t k = 0; k < keep.size(); ++k)
    for (std::size_t j = 0; j < reps.cols(); ++j) out.at(k, j) = reps.at(keep[k], j);
  return out;
}

void stage_fit(const PipelineConfig& cfg, const ArtifactPaths& paths, const StageOverrides& ov) {
  fs::create_directories(paths.detectors_dir);
  DetectorKind kind =
      ov.detector ? detector_kind_from_name(*ov.detector) : cfg.detector_kind();
  for (std::uint64_t seed : selected_seeds(cfg, ov)) {
    Tensor reps = detector_fit_reps(cfg, paths, seed, ov);
    KernelSpec kernel = cfg.detector_kernel();
    if (kernel.kind == KernelKind::rbf && kernel.gamma <= 0.0)
      kernel.gamma = default_gamma(reps, cfg.get_bool("detector.gamma_per_dim"));
    Detector det = fit_detector(kind, reps, cfg.detector_nu(), kernel);
    save_detector(det, paths.detector(detector_kind_name(kind), seed));
  }
}

void stage_score(const PipelineConfig& cfg, const ArtifactPaths& paths,
                 const StageOverrides& ov) {
  fs::create_directories(paths.report_dir);
  DetectorKind kind =
      ov.detector ? detector_kind_from_name(*ov.detector) : cfg.detector_kind();
  for (std::uint64_t seed : selected_seeds(cfg, ov)) {
    std::string det_path = paths.detector(detector_kind_name(kind), seed);
    need_file(det_path);
    Detector det = load_detector(det_path);
    Tensor train_reps = load_tensor((need_file(paths.reps("train", seed)),
                                     paths.reps("train", seed)));
    Tensor in_reps = load_tensor((need_file(paths.reps("test_in", seed)),
                                  paths.reps("test_in", seed)));
    Tensor out_reps = load_tensor((need_file(paths.reps("test_out", seed)),
                                   paths.reps("test_out", seed)));

    std::vector<double> s_train = det.score(train_reps);
    std::vector<double> s_in = det.score(in_reps);
    std::vector<double> s_out = det.score(out_reps);

    ScoredSet test_set;
    test_set.scores = s_in;
    test_set.labels.assign(s_in.size(), true);
    test_set.scores.insert(test_set.scores.end(), s_out.begin(), s_out.end());
    test_set.labels.insert(test_set.labels.end(), s_out.size(), false);
    double auc_test = auc(test_set);

    ScoredSet train_vs_out;
    train_vs_out.scores = s_train;
    train_vs_out.labels.assign(s_train.size(), true);
    train_vs_out.scores.insert(train_vs_out.scores.end(), s_out.begin(), s_out.end());
    train_vs_out.labels.insert(train_vs_out.labels.end(), s_out.size(), false);
    double auc_train = auc(train_vs_out);

    std::ofstream f(paths.scores(seed), std::ios::trunc);
    f << "sample_id,score,label\n";
    for (std::size_t i = 0; i < test_set.scores.size(); ++i)
      f << i << ',' << fmt_double(test_set.scores[i]) << ',' << (test_set.labels[i] ? 1 : 0)
        << '\n';
    f << "# summary auc_test=" << fmt_double(auc_test)
      << " auc_train=" << fmt_double(auc_train) << '\n';

    std::ofstream ft(paths.train_scores(seed), std::ios::trunc);
    ft << "sample_id,score,label\n";
    for (std::size_t i = 0; i < s_train.size(); ++i)
      ft << i << ',' << fmt_double(s_train[i]) << ",1\n";
  }
}

void stage_eval(const PipelineConfig& cfg, const ArtifactPaths& paths,
                const StageOverrides& ov) {
  fs::create_directories(paths.report_dir);
  std::vector<std::uint64_t> seeds = selected_seeds(cfg, ov);
  std::vector<double> aucs_test, aucs_train, mmds_f, mmds_gf;
  std::vector<std::vector<double>> per_seed_scores;
  std::vector<bool> labels;

  MmdConfig mmd_cfg = cfg.mmd_config(derive_seed(cfg.root_seed(), "mmd"));
  for (std::uint64_t seed : seeds) {
    auto rows = read_score_rows(paths.scores(seed));
    std::vector<double> scores(rows.size());
    labels.assign(rows.size(), false);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      scores[i] = rows[i].score;
      labels[i] = rows[i].label != 0;
    }
    per_seed_scores.push_back(scores);
    aucs_test.push_back(auc({scores, labels}));

    auto train_rows = read_score_rows(paths.train_scores(seed));
    ScoredSet tv;
    for (const auto& r : train_rows) {
      tv.scores.push_back(r.score);
      tv.labels.push_back(true);
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (!labels[i]) {
        tv.scores.push_back(scores[i]);
        tv.labels.push_back(false);
      }
    aucs_train.push_back(auc(tv));

    // uniformity of the stage-one representations
    need_file(paths.reps("train", seed));
    Tensor train_reps = load_tensor(paths.reps("train", seed));
    mmds_f.push_back(mmd_to_uniform(train_reps, mmd_cfg));
    std::string model_path = paths.model(seed);
    need_file(model_path);
    ModelBundle model = load_model(model_path);
    need_file(paths.train_data);
    Dataset train_set = load_split(paths.train_data);
    mmds_gf.push_back(mmd_to_uniform(forward_gf(model, train_set.as_rows()), mmd_cfg));
  }

  std::vector<double> combined = ensemble_scores(per_seed_scores, EnsembleNormalization::zscore);
  double auc_ensemble = auc({combined, labels});

  std::ofstream f(paths.summary, std::ios::trunc);
  f << "seed,auc_train,auc_test,mmd_f,mmd_gf\n";
  for (std::size_t i = 0; i < seeds.size(); ++i)
    f << seeds[i] << ',' << fmt_double(aucs_train[i]) << ',' << fmt_double(aucs_test[i]) << ','
      << fmt_double(mmds_f[i]) << ',' << fmt_double(mmds_gf[i]) << '\n';
  f << "mean," << fmt_double(mean_of(aucs_train)) << ',' << fmt_double(mean_of(aucs_test))
    << ',' << fmt_double(mean_of(mmds_f)) << ',' << fmt_double(mean_of(mmds_gf)) << '\n';
  f << "std," << fmt_double(stddev_of(aucs_train)) << ',' << fmt_double(stddev_of(aucs_test))
    << ',' << fmt_double(stddev_of(mmds_f)) << ',' << fmt_double(stddev_of(mmds_gf)) << '\n';
  f << "ensemble,," << fmt_double(auc_ensemble) << ",,\n";
  std::cout << "eval: mean test AUC " << mean_of(aucs_test) << " (ensemble " << auc_ensemble
            << ")\n";
}

void stage_mmd(const PipelineConfig& cfg, const ArtifactPaths& paths, const StageOverrides& ov) {
  need_file(paths.train_data);
  Dataset train_set = load_split(paths.train_data);
  AugmentPlan plan = cfg.augment_plan();
  fs::create_directories(paths.report_dir);
  std::vector<std::size_t> batch_sizes = ov.batch_sizes.value_or(cfg.mmd_batch_sizes());
  MmdConfig mmd_cfg = cfg.mmd_config(derive_seed(cfg.root_seed(), "mmd"));

  std::ofstream f(paths.mmd_csv, std::ios::trunc);
  f << "batch_size_or_tag,mmd\n";
  for (std::size_t bs : batch_sizes) {
    for (std::uint64_t seed : selected_seeds(cfg, ov)) {
      ModelBundle model = init(cfg.network_config(train_set.input_dim(), seed));
      TrainRun run = cfg.train_run(seed);
      run.batch_size = bs;
      train(run, model, train_set, plan);
      Tensor rows = train_set.as_rows();
      double mmd_f = mmd_to_uniform(forward_f(model, rows), mmd_cfg);
      double mmd_gf = mmd_to_uniform(forward_gf(model, rows), mmd_cfg);
      f << "bs" << bs << "_f_seed" << seed << ',' << fmt_double(mmd_f) << '\n';
      f << "bs" << bs << "_gf_seed" << seed << ',' << fmt_double(mmd_gf) << '\n';
      std::cout << "mmd: batch " << bs << " seed " << seed << " f " << mmd_f << " gf "
                << mmd_gf << "\n";
    }
  }
}

void stage_explain(const PipelineConfig& cfg, const ArtifactPaths& paths,
                   const StageOverrides& ov) {
  fs::create_directories(paths.report_dir);
  std::vector<std::uint64_t> seeds = selected_seeds(cfg, ov);
  std::uint64_t seed = seeds.front();
  std::string model_path = ov.model_path.value_or(paths.model(seed));
  need_file(model_path);
  ModelBundle model = load_model(model_path);

  need_file(paths.reps("train", seed));
  Tensor train_reps = load_tensor(paths.reps("train", seed));
  KernelSpec kernel = cfg.detector_kernel();
  double gamma = kernel.gamma > 0.0
                     ? kernel.gamma
                     : default_gamma(train_reps, cfg.get_bool("detector.gamma_per_dim"));
  KdeModel kde = fit_kde(train_reps, gamma);

  Dataset test_in = load_split(paths.test_in_data);
  Dataset test_out = load_split(paths.test_out_data);
  Tensor in_rows = test_in.as_rows();
  Tensor out_rows = test_out.as_rows();

  ScoreFn fn = kde_score_fn(model, kde, cfg.explain_mode());
  int steps = cfg.explain_steps();
  std::vector<std::size_t> samples = ov.samples.value_or(cfg.explain_samples());
  for (std::size_t id : samples) {
    Tensor x;
    if (id < in_rows.rows()) {
      x = Tensor({1, in_rows.cols()});
      for (std::size_t j = 0; j < in_rows.cols(); ++j) x.at(0, j) = in_rows.at(id, j);
    } else if (id < in_rows.rows() + out_rows.rows()) {
      std::size_t k = id - in_rows.rows();
      x = Tensor({1, out_rows.cols()});
      for (std::size_t j = 0; j < out_rows.cols(); ++j) x.at(0, j) = out_rows.at(k, j);
    } else {
      throw ConfigError("explain.samples: id " + std::to_string(id) +
                        " is outside the test set");
    }
    Tensor baseline = Tensor::zeros(x.shape());
    Attribution attr = integrated_gradients(fn, x, baseline, steps);

    std::ofstream f(paths.attribution(id, seed), std::ios::trunc);
    if (test_in.kind == DataKind::images) {
      std::size_t h = test_in.images.height, w = test_in.images.width;
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          if (j) f << ',';
          f << fmt_double(attr.values[i * w + j]);
        }
        f << '\n';
      }
      if (cfg.explain_ascii())
        std::cout << "sample " << id << " (score " << attr.score_at_input << "):\n"
                  << ascii_heatmap(attr.values, h, w);
    } else {
      for (std::size_t j = 0; j < attr.values.size(); ++j) {
        if (j) f << ',';
        f << fmt_double(attr.values[j]);
      }
      f << '\n';
    }
  }
}

}  // namespace

void run_pipeline(const PipelineConfig& cfg, Stage stage, const StageOverrides& ov) {
  ArtifactPaths paths(cfg.out_dir());
  fs::create_directories(paths.root);
  DirLock lock(paths.lock);

  switch (stage) {
    case Stage::gen: stage_gen(cfg, paths); break;
    case Stage::train: stage_train(cfg, paths, ov); break;
    case Stage::embed: stage_embed(cfg, paths, ov); break;
    case Stage::fit: stage_fit(cfg, paths, ov); break;
    case Stage::score: stage_score(cfg, paths, ov); break;
    case Stage::eval: stage_eval(cfg, paths, ov); break;
    case Stage::mmd: stage_mmd(cfg, paths, ov); break;
    case Stage::explain: stage_explain(cfg, paths, ov); break;
    case Stage::all:
      stage_gen(cfg, paths);
      stage_train(cfg, paths, ov);
      stage_embed(cfg, paths, ov);
      stage_fit(cfg, paths, ov);
      stage_score(cfg, paths, ov);
      stage_eval(cfg, paths, ov);
      break;
  }
}

}  // namespace occ
