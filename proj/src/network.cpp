#include "occ/network.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "occ/rng.hpp"
#include "occ/serialize.hpp"

namespace occ {

namespace {

constexpr std::uint16_t kModelVersion = 1;

// Parameter prototypes in the fixed layout order shared by init, the forward
// builders and the model file. Forward walking code must consume params in
// exactly this order.
std::vector<Param> build_layout(const NetworkConfig& cfg) {
  std::vector<Param> params;
  auto weight = [&](const std::string& name, std::size_t in, std::size_t out) {
    params.push_back({name, Tensor({in, out}, cfg.precision), ParamKind::weight});
  };
  auto bias = [&](const std::string& name, std::size_t n) {
    params.push_back({name, Tensor({n}, cfg.precision), ParamKind::bias});
  };

  std::size_t prev = cfg.input_dim;
  for (std::size_t l = 0; l < cfg.encoder_widths.size(); ++l) {
    std::size_t w = cfg.encoder_widths[l];
    weight("f." + std::to_string(l) + ".w", prev, w);
    bias("f." + std::to_string(l) + ".b", w);
    prev = w;
  }
  if (cfg.head_depth > 0) {
    for (std::size_t k = 0; k < cfg.head_depth; ++k) {
      weight("g." + std::to_string(k) + ".w", prev, cfg.head_hidden_width);
      bias("g." + std::to_string(k) + ".b", cfg.head_hidden_width);
      if (cfg.use_batch_norm_in_head) {
        Tensor ones({cfg.head_hidden_width}, cfg.precision);
        for (std::size_t i = 0; i < ones.size(); ++i) ones[i] = 1.0;
        params.push_back({"g." + std::to_string(k) + ".bn_scale", ones, ParamKind::bn_scale});
        params.push_back({"g." + std::to_string(k) + ".bn_shift",
                          Tensor({cfg.head_hidden_width}, cfg.precision), ParamKind::bn_shift});
      }
      prev = cfg.head_hidden_width;
    }
    weight("g.out.w", prev, cfg.head_output_dim);
    bias("g.out.b", cfg.head_output_dim);
    prev = cfg.head_output_dim;
  }
  weight("q.w", prev, cfg.q_outputs);
  bias("q.b", cfg.q_outputs);
  return params;
}

// Walks the layout alongside build_layout. upto: 0 stops after f, 1 after g,
// 2 includes q.
NodeId build_forward(Tape& tape, const NetworkConfig& cfg,
                     const std::vector<NodeId>& param_nodes,
                     std::vector<BatchNormState>& bn_states, NodeId x, int upto,
                     BnMode mode) {
  std::size_t p = 0;
  auto next = [&]() { return param_nodes[p++]; };

  NodeId h = x;
  for (std::size_t l = 0; l < cfg.encoder_widths.size(); ++l) {
    NodeId w = next(), b = next();
    h = tape.affine(h, w, b);
    if (l + 1 < cfg.encoder_widths.size()) h = tape.relu(h);
  }
  if (upto == 0) return h;

  if (cfg.head_depth > 0) {
    for (std::size_t k = 0; k < cfg.head_depth; ++k) {
      NodeId w = next(), b = next();
      h = tape.affine(h, w, b);
      if (cfg.use_batch_norm_in_head) {
        NodeId s = next(), sh = next();
        h = tape.batch_norm(h, s, sh, &bn_states[k], mode);
      }
      h = tape.relu(h);
    }
    NodeId w = next(), b = next();
    h = tape.affine(h, w, b);
  }
  if (upto == 1) return h;

  NodeId qw = next(), qb = next();
  return tape.affine(h, qw, qb);
}

Tensor run_eval(const ModelBundle& model, const Tensor& x, int upto) {
  Tape tape;
  NodeId in = tape.leaf(x, false);
  std::vector<NodeId> pn;
  pn.reserve(model.params.size());
  for (const Param& p : model.params) pn.push_back(tape.leaf(p.value, false));
  // eval mode reads but never writes running stats; work on a copy anyway
  std::vector<BatchNormState> states = model.bn_states;
  NodeId out = build_forward(tape, model.config, pn, states, in, upto, BnMode::eval);
  return tape.value(out);
}

Tensor run_train(ModelBundle& model, const Tensor& x, int upto) {
  Tape tape;
  NodeId in = tape.leaf(x, false);
  std::vector<NodeId> pn;
  pn.reserve(model.params.size());
  for (const Param& p : model.params) pn.push_back(tape.leaf(p.value, false));
  NodeId out = build_forward(tape, model.config, pn, model.bn_states, in, upto, BnMode::train);
  return tape.value(out);
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("network: input_dim must be positive");
  if (encoder_widths.empty())
    throw std::invalid_argument("network: encoder_widths must be nonempty");
  for (std::size_t w : encoder_widths)
    if (w == 0) throw std::invalid_argument("network: zero-width encoder layer");
  if (head_depth > 0 && (head_hidden_width == 0 || head_output_dim == 0))
    throw std::invalid_argument("network: zero-width head layer");
  if (q_outputs == 0) throw std::invalid_argument("network: q_outputs must be positive");
}

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::rotation: return "rotation";
    case Objective::contrastive: return "contrastive";
    case Objective::contrastive_distaug: return "contrastive_distaug";
    default: return "none";
  }
}

Objective objective_from_name(const std::string& name) {
  if (name == "rotation") return Objective::rotation;
  if (name == "contrastive") return Objective::contrastive;
  if (name == "contrastive_distaug") return Objective::contrastive_distaug;
  if (name == "none") return Objective::none;
  throw std::invalid_argument("unknown objective: " + name);
}

ModelBundle init(const NetworkConfig& config) {
  config.validate();
  ModelBundle model;
  model.config = config;
  model.params = build_layout(config);

  Rng rng(derive_seed(config.seed, "init"));
  for (Param& p : model.params) {
    if (p.kind != ParamKind::weight) continue;
    double std = std::sqrt(2.0 / static_cast<double>(p.value.rows()));
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.normal() * std;
    p.value.quantize();
  }
  if (config.head_depth > 0 && config.use_batch_norm_in_head) {
    for (std::size_t k = 0; k < config.head_depth; ++k) {
      BatchNormState st;
      st.running_mean = Tensor({config.head_hidden_width});
      st.running_var = Tensor({config.head_hidden_width});
      for (std::size_t i = 0; i < st.running_var.size(); ++i) st.running_var[i] = 1.0;
      model.bn_states.push_back(std::move(st));
    }
  }
  return model;
}

ModelGraph::ModelGraph(Tape& tape, ModelBundle& model) : tape_(tape), model_(model) {
  param_nodes_.reserve(model.params.size());
  for (const Param& p : model.params) param_nodes_.push_back(tape_.leaf(p.value, true));
}

NodeId ModelGraph::forward_f(NodeId x) {
  return build_forward(tape_, model_.config, param_nodes_, model_.bn_states, x, 0,
                       BnMode::eval);
}

NodeId ModelGraph::forward_gf(NodeId x, BnMode mode) {
  return build_forward(tape_, model_.config, param_nodes_, model_.bn_states, x, 1, mode);
}

NodeId ModelGraph::forward_q(NodeId x, BnMode mode) {
  return build_forward(tape_, model_.config, param_nodes_, model_.bn_states, x, 2, mode);
}

std::vector<Tensor> ModelGraph::param_grads(const std::vector<Tensor>& grads) const {
  std::vector<Tensor> out;
  out.reserve(param_nodes_.size());
  for (NodeId id : param_nodes_) out.push_back(grads[id]);
  return out;
}

Tensor forward_f(const ModelBundle& model, const Tensor& x) { return run_eval(model, x, 0); }
Tensor forward_gf(const ModelBundle& model, const Tensor& x) { return run_eval(model, x, 1); }
Tensor forward_q(const ModelBundle& model, const Tensor& x) { return run_eval(model, x, 2); }
Tensor forward_gf_train(ModelBundle& model, const Tensor& x) { return run_train(model, x, 1); }
Tensor forward_q_train(ModelBundle& model, const Tensor& x) { return run_train(model, x, 2); }

namespace {

std::string encode_config(const ModelBundle& model) {
  const NetworkConfig& c = model.config;
  std::ostringstream os;
  os << "input_dim = " << c.input_dim << "\n";
  os << "encoder_widths =";
  for (std::size_t w : c.encoder_widths) os << ' ' << w;
  os << "\n";
  os << "head_depth = " << c.head_depth << "\n";
  os << "head_hidden_width = " << c.head_hidden_width << "\n";
  os << "head_output_dim = " << c.head_output_dim << "\n";
  os << "q_outputs = " << c.q_outputs << "\n";
  os << "use_batch_norm_in_head = " << (c.use_batch_norm_in_head ? "true" : "false") << "\n";
  os << "precision = " << (c.precision == Dtype::f32 ? "f32" : "f64") << "\n";
  os << "seed = " << c.seed << "\n";
  os << "objective = " << objective_name(model.meta.objective) << "\n";
  os << "step = " << model.meta.step << "\n";
  return os.str();
}

void decode_config(const std::string& text, NetworkConfig& cfg, TrainingMeta& meta) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
    };
    trim(key);
    trim(val);
    if (key == "input_dim") cfg.input_dim = std::stoull(val);
    else if (key == "encoder_widths") {
      cfg.encoder_widths.clear();
      std::istringstream vs(val);
      std::size_t w;
      while (vs >> w) cfg.encoder_widths.push_back(w);
    } else if (key == "head_depth") cfg.head_depth = std::stoull(val);
    else if (key == "head_hidden_width") cfg.head_hidden_width = std::stoull(val);
    else if (key == "head_output_dim") cfg.head_output_dim = std::stoull(val);
    else if (key == "q_outputs") cfg.q_outputs = std::stoull(val);
    else if (key == "use_batch_norm_in_head") cfg.use_batch_norm_in_head = (val == "true");
    else if (key == "precision") cfg.precision = (val == "f32" ? Dtype::f32 : Dtype::f64);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "objective") meta.objective = objective_from_name(val);
    else if (key == "step") meta.step = std::stoull(val);
    else throw std::runtime_error("model file: unknown config key '" + key + "'");
  }
}

}  // namespace

void save_model(const ModelBundle& model, const std::string& path) {
  ByteWriter w;
  w.bytes("OCC1", 4);
  w.u16(kModelVersion);
  w.str(encode_config(model));
  w.u32(static_cast<std::uint32_t>(model.params.size() + 2 * model.bn_states.size()));
  for (const Param& p : model.params) w.tensor(p.value);
  for (const BatchNormState& st : model.bn_states) {
    w.tensor(st.running_mean);
    w.tensor(st.running_var);
  }
  w.append_crc32();
  write_file(path, w.buffer());
}

ModelBundle load_model(const std::string& path) {
  ByteReader r(read_file(path));
  r.check_crc32("model file " + path);
  r.magic("OCC1", "model file " + path);
  std::uint16_t version = r.u16();
  if (version > kModelVersion)
    throw std::runtime_error("model file " + path + ": format version " +
                             std::to_string(version) + " is newer than supported " +
                             std::to_string(kModelVersion));
  NetworkConfig cfg;
  TrainingMeta meta;
  decode_config(r.str(), cfg, meta);
  cfg.validate();

  ModelBundle model;
  model.config = cfg;
  model.meta = meta;
  model.params = build_layout(cfg);
  std::size_t expected_bn =
      (cfg.head_depth > 0 && cfg.use_batch_norm_in_head) ? cfg.head_depth : 0;
  std::uint32_t count = r.u32();
  if (count != model.params.size() + 2 * expected_bn)
    throw std::runtime_error("model file " + path + ": tensor count mismatch");
  for (Param& p : model.params) {
    Tensor t = r.tensor();
    if (t.shape() != p.value.shape())
      throw std::runtime_error("model file " + path + ": shape mismatch for " + p.name);
    t.quantize();
    p.value = Tensor(t.shape(), t.data(), cfg.precision);
  }
  for (std::size_t k = 0; k < expected_bn; ++k) {
    BatchNormState st;
    st.running_mean = r.tensor();
    st.running_var = r.tensor();
    if (st.running_mean.size() != cfg.head_hidden_width ||
        st.running_var.size() != cfg.head_hidden_width)
      throw std::runtime_error("model file " + path + ": batch-norm state shape mismatch");
    model.bn_states.push_back(std::move(st));
  }
  if (r.remaining() != 0)
    throw std::runtime_error("model file " + path + ": trailing bytes");
  return model;
}

}  // namespace occ
