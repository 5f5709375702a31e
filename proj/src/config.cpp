#include "occ/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace occ {

namespace {

struct SchemaEntry {
  const char* key;
  const char* default_value;
};

// Full key schema with defaults. Paper-reported training hyperparameters keep
// their published values (learning_rate 0.01, momentum 0.9, weight_decay
// 0.0003, temperature 0.2, batch_size 32, nu 0.5, gamma heuristic); epochs
// and the network widths default to desk scale.
const SchemaEntry kSchema[] = {
    {"dataset.kind", "shapes_images"},
    {"dataset.image_size", "12"},
    {"dataset.outlier_kind", "vbar"},
    {"dataset.pixel_noise", "0.02"},
    {"dataset.dim", "8"},
    {"dataset.blob_distance", "4.0"},
    {"dataset.blob_sigma", "1.0"},
    {"dataset.ring_radius", "1.0"},
    {"dataset.ring_width", "0.1"},
    {"dataset.n_train", "128"},
    {"dataset.n_test_in", "64"},
    {"dataset.n_test_out", "64"},
    {"dataset.contamination_ratio", "0.0"},
    {"network.encoder_widths", "64 64 32"},
    {"network.head_depth", "2"},
    {"network.head_hidden_width", "64"},
    {"network.head_output_dim", "16"},
    {"network.use_batch_norm_in_head", "true"},
    {"network.precision", "f64"},
    {"augment.crop_scale_min", "0.6"},
    {"augment.crop_scale_max", "1.0"},
    {"augment.hflip_prob", "0.5"},
    {"augment.brightness_jitter", "0.2"},
    {"augment.contrast_jitter", "0.2"},
    {"augment.grayscale_prob", "0.1"},
    {"augment.blur_sigma_min", "0.0"},
    {"augment.blur_sigma_max", "1.0"},
    {"augment.vec_noise_sigma", "0.05"},
    {"augment.vec_scale_jitter", "0.1"},
    {"augment.dist_set", "identity rot90 rot180 rot270"},
    {"objective.kind", "contrastive_distaug"},
    {"objective.temperature", "0.2"},
    {"objective.symmetric", "false"},
    {"optimizer.learning_rate", "0.01"},
    {"optimizer.momentum", "0.9"},
    {"optimizer.weight_decay", "0.0003"},
    {"optimizer.epochs", "200"},
    {"optimizer.batch_size", "32"},
    {"optimizer.checkpoint_every", "0"},
    {"detector.kind", "kde"},
    {"detector.nu", "0.5"},
    {"detector.kernel", "rbf"},
    {"detector.gamma", "0"},
    {"detector.gamma_per_dim", "false"},
    {"detector.train_subset", "0"},
    {"detector.surrogate_variant", "sum_all"},
    {"evaluate.seeds", "1 2 3 4 5"},
    {"evaluate.mmd_bandwidth", "median"},
    {"evaluate.mmd_sigma", "1.0"},
    {"evaluate.mmd_estimator", "biased"},
    {"evaluate.mmd_uniform_samples", "256"},
    {"evaluate.mmd_batch_sizes", "8 32 128"},
    {"explain.samples", "0"},
    {"explain.steps", "128"},
    {"explain.score_mode", "log"},
    {"explain.ascii", "false"},
    {"pipeline.out_dir", "out"},
    {"pipeline.seed", "7"},
};

bool known_key(const std::string& key) {
  for (const SchemaEntry& e : kSchema)
    if (key == e.key) return true;
  return false;
}

std::string trim(std::string s) {
  auto issp = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && issp(s.front())) s.erase(s.begin());
  while (!s.empty() && issp(s.back())) s.pop_back();
  return s;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == ' ' || c == ',' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig cfg;
  for (const SchemaEntry& e : kSchema) cfg.values_[e.key] = e.default_value;
  return cfg;
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
  PipelineConfig cfg = defaults();
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                        "' outside any [section]");
    cfg.set(section + "." + key, value);
  }
  return cfg;
}

PipelineConfig PipelineConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse(os.str());
}

std::string PipelineConfig::serialize() const {
  std::ostringstream os;
  std::string section;
  for (const SchemaEntry& e : kSchema) {
    std::string key = e.key;
    auto dot = key.find('.');
    std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << values_.at(key) << '\n';
  }
  return os.str();
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (!known_key(key)) throw ConfigError("unknown configuration key: " + key);
  values_[key] = trim(value);
}

const std::string& PipelineConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key: " + key);
  return it->second;
}

std::uint64_t PipelineConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

double PipelineConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool PipelineConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::uint64_t> PipelineConfig::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const std::string& tok : split_list(get(key))) {
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected integers, got '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

DatasetSpec PipelineConfig::dataset_spec() const {
  DatasetSpec spec;
  const std::string& kind = get("dataset.kind");
  if (kind == "shapes_images") spec.family = DatasetSpec::Family::shapes_images;
  else if (kind == "gaussian_blobs") spec.family = DatasetSpec::Family::gaussian_blobs;
  else if (kind == "ring") spec.family = DatasetSpec::Family::ring;
  else throw ConfigError("dataset.kind: unknown dataset family '" + kind + "'");

  spec.image_size = get_u64("dataset.image_size");
  const std::string& outlier = get("dataset.outlier_kind");
  if (outlier == "vbar") spec.outlier_shape = DatasetSpec::OutlierShape::vbar;
  else if (outlier == "cross") spec.outlier_shape = DatasetSpec::OutlierShape::cross;
  else throw ConfigError("dataset.outlier_kind: expected vbar or cross, got '" + outlier + "'");
  spec.pixel_noise = get_double("dataset.pixel_noise");
  spec.dim = get_u64("dataset.dim");
  spec.blob_distance = get_double("dataset.blob_distance");
  spec.blob_sigma = get_double("dataset.blob_sigma");
  spec.ring_radius = get_double("dataset.ring_radius");
  spec.ring_width = get_double("dataset.ring_width");
  spec.n_train = get_u64("dataset.n_train");
  spec.n_test_in = get_u64("dataset.n_test_in");
  spec.n_test_out = get_u64("dataset.n_test_out");
  spec.contamination_ratio = get_double("dataset.contamination_ratio");
  spec.seed = root_seed();
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

NetworkConfig PipelineConfig::network_config(std::size_t input_dim, std::uint64_t seed) const {
  NetworkConfig cfg;
  cfg.input_dim = input_dim;
  cfg.encoder_widths.clear();
  for (std::uint64_t w : get_u64_list("network.encoder_widths"))
    cfg.encoder_widths.push_back(static_cast<std::size_t>(w));
  cfg.head_depth = get_u64("network.head_depth");
  cfg.head_hidden_width = get_u64("network.head_hidden_width");
  cfg.head_output_dim = get_u64("network.head_output_dim");
  cfg.q_outputs = 4;
  cfg.use_batch_norm_in_head = get_bool("network.use_batch_norm_in_head");
  const std::string& prec = get("network.precision");
  if (prec == "f64") cfg.precision = Dtype::f64;
  else if (prec == "f32") cfg.precision = Dtype::f32;
  else throw ConfigError("network.precision: expected f64 or f32, got '" + prec + "'");
  cfg.seed = seed;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

AugmentPlan PipelineConfig::augment_plan() const {
  AugmentPlan plan;
  plan.view.crop_scale_min = get_double("augment.crop_scale_min");
  plan.view.crop_scale_max = get_double("augment.crop_scale_max");
  plan.view.hflip_prob = get_double("augment.hflip_prob");
  plan.view.brightness_jitter = get_double("augment.brightness_jitter");
  plan.view.contrast_jitter = get_double("augment.contrast_jitter");
  plan.view.grayscale_prob = get_double("augment.grayscale_prob");
  plan.view.blur_sigma_min = get_double("augment.blur_sigma_min");
  plan.view.blur_sigma_max = get_double("augment.blur_sigma_max");
  plan.view.vec_noise_sigma = get_double("augment.vec_noise_sigma");
  plan.view.vec_scale_jitter = get_double("augment.vec_scale_jitter");
  plan.dist_set.clear();
  for (const std::string& name : split_list(get("augment.dist_set"))) {
    try {
      plan.dist_set.push_back(dist_transform_from_name(name));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("augment.dist_set: ") + e.what());
    }
  }
  plan.seed = root_seed();
  try {
    plan.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return plan;
}

Objective PipelineConfig::objective() const {
  try {
    return objective_from_name(get("objective.kind"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("objective.kind: ") + e.what());
  }
}

TrainRun PipelineConfig::train_run(std::uint64_t seed) const {
  TrainRun run;
  run.objective = objective();
  run.epochs = get_u64("optimizer.epochs");
  run.batch_size = get_u64("optimizer.batch_size");
  run.seed = seed;
  run.base_lr = get_double("optimizer.learning_rate");
  run.momentum = get_double("optimizer.momentum");
  run.weight_decay = get_double("optimizer.weight_decay");
  run.temperature = get_double("objective.temperature");
  run.symmetric_contrastive = get_bool("objective.symmetric");
  run.checkpoint_every = get_u64("optimizer.checkpoint_every");
  return run;
}

DetectorKind PipelineConfig::detector_kind() const {
  try {
    return detector_kind_from_name(get("detector.kind"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("detector.kind: ") + e.what());
  }
}

KernelSpec PipelineConfig::detector_kernel() const {
  KernelSpec spec;
  const std::string& k = get("detector.kernel");
  if (k == "linear") spec.kind = KernelKind::linear;
  else if (k == "rbf") spec.kind = KernelKind::rbf;
  else throw ConfigError("detector.kernel: expected linear or rbf, got '" + k + "'");
  spec.gamma = get_double("detector.gamma");
  return spec;
}

double PipelineConfig::detector_nu() const {
  double nu = get_double("detector.nu");
  if (nu <= 0.0 || nu > 1.0) throw ConfigError("detector.nu: must be in (0, 1]");
  return nu;
}

std::size_t PipelineConfig::detector_train_subset() const {
  return get_u64("detector.train_subset");
}

std::vector<std::uint64_t> PipelineConfig::seeds() const {
  return get_u64_list("evaluate.seeds");
}

MmdConfig PipelineConfig::mmd_config(std::uint64_t seed) const {
  MmdConfig cfg;
  const std::string& rule = get("evaluate.mmd_bandwidth");
  if (rule == "median") cfg.bandwidth_rule = MmdBandwidthRule::median;
  else if (rule == "fixed") cfg.bandwidth_rule = MmdBandwidthRule::fixed;
  else throw ConfigError("evaluate.mmd_bandwidth: expected median or fixed");
  cfg.sigma = get_double("evaluate.mmd_sigma");
  const std::string& est = get("evaluate.mmd_estimator");
  if (est == "biased") cfg.estimator = MmdEstimator::biased;
  else if (est == "unbiased") cfg.estimator = MmdEstimator::unbiased;
  else throw ConfigError("evaluate.mmd_estimator: expected biased or unbiased");
  cfg.uniform_samples = get_u64("evaluate.mmd_uniform_samples");
  cfg.seed = seed;
  return cfg;
}

std::vector<std::size_t> PipelineConfig::mmd_batch_sizes() const {
  std::vector<std::size_t> out;
  for (std::uint64_t v : get_u64_list("evaluate.mmd_batch_sizes"))
    out.push_back(static_cast<std::size_t>(v));
  return out;
}

std::vector<std::size_t> PipelineConfig::explain_samples() const {
  std::vector<std::size_t> out;
  for (std::uint64_t v : get_u64_list("explain.samples"))
    out.push_back(static_cast<std::size_t>(v));
  return out;
}

int PipelineConfig::explain_steps() const {
  std::uint64_t s = get_u64("explain.steps");
  if (s == 0) throw ConfigError("explain.steps: must be >= 1");
  return static_cast<int>(s);
}

KdeScoreMode PipelineConfig::explain_mode() const {
  const std::string& m = get("explain.score_mode");
  if (m == "log") return KdeScoreMode::log;
  if (m == "raw") return KdeScoreMode::raw;
  throw ConfigError("explain.score_mode: expected log or raw");
}

bool PipelineConfig::explain_ascii() const { return get_bool("explain.ascii"); }

std::string PipelineConfig::out_dir() const { return get("pipeline.out_dir"); }

std::uint64_t PipelineConfig::root_seed() const { return get_u64("pipeline.seed"); }

}  // namespace occ
