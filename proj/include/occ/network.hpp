#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occ/tape.hpp"
#include "occ/tensor.hpp"

namespace occ {

// Architecture of the three-part model q(g(f(x))): encoder f (plain MLP,
// batch-norm free so representations are batch independent), MLP projection
// head g (affine + optional batch norm + relu blocks, then a linear output),
// and a linear classification head q. head_depth = 0 makes g the identity.
struct NetworkConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> encoder_widths{128, 128, 64};
  std::size_t head_depth = 2;
  std::size_t head_hidden_width = 128;
  std::size_t head_output_dim = 32;
  std::size_t q_outputs = 4;  // 4 for rotation prediction over {0,90,180,270}
  bool use_batch_norm_in_head = true;
  Dtype precision = Dtype::f64;
  std::uint64_t seed = 0;

  std::size_t feature_dim() const { return encoder_widths.back(); }
  std::size_t head_out_dim() const { return head_depth == 0 ? feature_dim() : head_output_dim; }
  void validate() const;  // throws on zero widths / missing input_dim
  bool operator==(const NetworkConfig&) const = default;
};

enum class ParamKind { weight, bias, bn_scale, bn_shift };

struct Param {
  std::string name;
  Tensor value;
  ParamKind kind = ParamKind::weight;
};

enum class Objective { none, rotation, contrastive, contrastive_distaug };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& name);

struct TrainingMeta {
  Objective objective = Objective::none;
  std::uint64_t step = 0;
};

// Parameters plus training state. Parameter order is fixed by the config, so
// optimizer state and gradients align by index.
struct ModelBundle {
  NetworkConfig config;
  std::vector<Param> params;
  std::vector<BatchNormState> bn_states;  // one per head hidden block when enabled
  TrainingMeta meta;
};

// He-normal weights (std sqrt(2/fan_in)), zero biases, unit batch-norm scale;
// deterministic given config.seed.
ModelBundle init(const NetworkConfig& config);

// Binds a model's parameters as gradient-requiring leaves on a tape and
// builds forward graphs against them. One instance per tape.
class ModelGraph {
 public:
  ModelGraph(Tape& tape, ModelBundle& model);

  NodeId forward_f(NodeId x);
  NodeId forward_gf(NodeId x, BnMode mode);
  NodeId forward_q(NodeId x, BnMode mode);

  NodeId param_node(std::size_t i) const { return param_nodes_[i]; }
  std::size_t param_count() const { return param_nodes_.size(); }

  // gradients aligned with model.params, taken from a backward() result
  std::vector<Tensor> param_grads(const std::vector<Tensor>& grads) const;

 private:
  Tape& tape_;
  ModelBundle& model_;
  std::vector<NodeId> param_nodes_;
};

// Value-level forward passes. Eval mode never mutates running statistics, so
// these are safe on shared frozen models.
Tensor forward_f(const ModelBundle& model, const Tensor& x);
Tensor forward_gf(const ModelBundle& model, const Tensor& x);    // eval mode
Tensor forward_q(const ModelBundle& model, const Tensor& x);     // eval mode
Tensor forward_gf_train(ModelBundle& model, const Tensor& x);    // updates bn state
Tensor forward_q_train(ModelBundle& model, const Tensor& x);

// Model file: magic "OCC1", u16 version, length-prefixed config text, tensors
// (params, then batch-norm running stats), CRC32 trailer. Round-trip is
// bit-exact on parameters.
void save_model(const ModelBundle& model, const std::string& path);
ModelBundle load_model(const std::string& path);

}  // namespace occ
