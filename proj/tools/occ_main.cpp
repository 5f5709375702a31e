// Command-line front end for the one-class classification pipeline.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "occ/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  occ::StageOverrides ov;
  unsigned long long seed = 0;
  bool seed_set = false;
  std::string split, model, reps, detector, batch_sizes, samples;
};

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(std::stoull(cur));
      cur.clear();
    }
  };
  for (char c : text) {
    if (c == ',' || c == ' ') flush();
    else if (c >= '0' && c <= '9') cur.push_back(c);
    else throw occ::ConfigError(what + ": expected a comma-separated integer list");
  }
  flush();
  if (out.empty()) throw occ::ConfigError(what + ": empty list");
  return out;
}

int run(occ::Stage stage, CommonArgs& args) {
  try {
    occ::PipelineConfig cfg = occ::PipelineConfig::parse_file(args.config_path);
    if (args.seed_set) args.ov.seed = args.seed;
    if (!args.split.empty()) args.ov.split = args.split;
    if (!args.model.empty()) args.ov.model_path = args.model;
    if (!args.reps.empty()) args.ov.reps_path = args.reps;
    if (!args.detector.empty()) args.ov.detector = args.detector;
    if (!args.batch_sizes.empty())
      args.ov.batch_sizes = parse_size_list(args.batch_sizes, "--batch-sizes");
    if (!args.samples.empty()) args.ov.samples = parse_size_list(args.samples, "--samples");
    occ::run_pipeline(cfg, stage, args.ov);
    return 0;
  } catch (const occ::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const occ::MissingArtifact& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage one-class classification toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  int rc = 0;

  auto add_common = [&](CLI::App* sub, bool with_seed = true) {
    sub->add_option("--config", args.config_path, "pipeline configuration file")->required();
    if (with_seed)
      sub->add_option("--seed", args.seed, "restrict to a single model seed")
          ->each([&](const std::string&) { args.seed_set = true; });
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen, false);
  gen->callback([&] { rc = run(occ::Stage::gen, args); });

  auto* train = app.add_subcommand("train", "train the representation model");
  add_common(train);
  train->callback([&] { rc = run(occ::Stage::train, args); });

  auto* embed = app.add_subcommand("embed", "write encoder representations for a split");
  add_common(embed);
  embed->add_option("--split", args.split, "train | test (default both)");
  embed->add_option("--model", args.model, "model file (default from the run layout)");
  embed->callback([&] { rc = run(occ::Stage::embed, args); });

  auto* fit = app.add_subcommand("fit", "fit the one-class detector on representations");
  add_common(fit);
  fit->add_option("--detector", args.detector, "ocsvm | kde | gde");
  fit->add_option("--reps", args.reps, "external representations file (.oct)");
  fit->callback([&] { rc = run(occ::Stage::fit, args); });

  auto* score = app.add_subcommand("score", "score the test splits with the fitted detector");
  add_common(score);
  score->add_option("--detector", args.detector, "ocsvm | kde | gde");
  score->callback([&] { rc = run(occ::Stage::score, args); });

  auto* eval = app.add_subcommand("eval", "aggregate per-seed scores into the summary");
  add_common(eval, false);
  eval->callback([&] { rc = run(occ::Stage::eval, args); });

  auto* mmd = app.add_subcommand("mmd", "batch-size sweep of representation uniformity");
  add_common(mmd);
  mmd->add_option("--batch-sizes", args.batch_sizes, "comma-separated batch sizes");
  mmd->callback([&] { rc = run(occ::Stage::mmd, args); });

  auto* explain = app.add_subcommand("explain", "integrated-gradients attributions");
  add_common(explain);
  explain->add_option("--samples", args.samples, "comma-separated test sample ids");
  explain->add_option("--model", args.model, "model file (default from the run layout)");
  explain->callback([&] { rc = run(occ::Stage::explain, args); });

  auto* all = app.add_subcommand("all", "run the full pipeline");
  add_common(all);
  all->callback([&] { rc = run(occ::Stage::all, args); });

  auto* print_config = app.add_subcommand("print-config", "print the default configuration");
  print_config->callback([&] { std::cout << occ::PipelineConfig::defaults().serialize(); });

  CLI11_PARSE(app, argc, argv);
  return rc;
}
