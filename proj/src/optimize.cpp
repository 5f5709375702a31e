#include "occ/optimize.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "occ/objectives.hpp"
#include "occ/rng.hpp"

namespace occ {

OptimizerState make_optimizer(const ModelBundle& model, double base_lr, double momentum,
                              double weight_decay, std::uint64_t total_steps) {
  OptimizerState st;
  st.base_lr = base_lr;
  st.momentum = momentum;
  st.weight_decay = weight_decay;
  st.total_steps = total_steps;
  st.velocity.reserve(model.params.size());
  for (const Param& p : model.params)
    st.velocity.push_back(Tensor::zeros(p.value.shape(), p.value.dtype()));
  return st;
}

double lr_at(std::uint64_t step, const OptimizerState& state) {
  if (step > state.total_steps)
    throw std::invalid_argument("lr_at: step " + std::to_string(step) + " beyond total_steps " +
                                std::to_string(state.total_steps));
  if (state.total_steps == 0) return state.base_lr;
  double frac = static_cast<double>(step) / static_cast<double>(state.total_steps);
  return 0.5 * state.base_lr * (1.0 + std::cos(3.14159265358979323846 * frac));
}

void sgd_step(ModelBundle& model, const std::vector<Tensor>& grads, OptimizerState& state) {
  if (grads.size() != model.params.size() || state.velocity.size() != model.params.size())
    throw std::invalid_argument("sgd_step: gradient/velocity count does not match parameters");
  double lr = lr_at(state.step, state);
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    Param& param = model.params[p];
    const Tensor& g = grads[p];
    if (g.size() != param.value.size())
      throw std::invalid_argument("sgd_step: gradient shape mismatch for " + param.name);
    bool decay = param.kind == ParamKind::weight;
    Tensor& v = state.velocity[p];
    for (std::size_t i = 0; i < g.size(); ++i) {
      double gi = g[i];
      if (std::isnan(gi))
        throw std::runtime_error("sgd_step: NaN gradient in " + param.name + " at step " +
                                 std::to_string(state.step));
      if (decay) gi += state.weight_decay * param.value[i];
      v[i] = state.momentum * v[i] + gi;
      param.value[i] -= lr * v[i];
    }
    v.quantize();
    param.value.quantize();
    param.value.check_finite("sgd_step(" + param.name + ")");
  }
  ++state.step;
  ++model.meta.step;
}

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch,
                                                    Rng& shuffle_rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  shuffle_rng.shuffle(idx);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start + batch <= n; start += batch)
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                     idx.begin() + static_cast<std::ptrdiff_t>(start + batch));
  return out;
}

Tensor gather_rows(const Tensor& rows, const std::vector<std::size_t>& idx) {
  Tensor out({idx.size(), rows.cols()});
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (std::size_t j = 0; j < rows.cols(); ++j) out.at(k, j) = rows.at(idx[k], j);
  return out;
}

}  // namespace

TrainResult train(const TrainRun& run, ModelBundle& model, const Dataset& data,
                  const AugmentPlan& plan) {
  if (data.n() == 0) throw std::invalid_argument("train: empty dataset");
  if (run.objective == Objective::rotation && data.kind != DataKind::images)
    throw std::invalid_argument("train: rotation objective requires image data");
  if (run.objective == Objective::none)
    throw std::invalid_argument("train: no objective configured");
  plan.validate();

  // contrastive_distaug trains on the union of the transformed copies
  ExpandedBatch expanded_images;
  ExpandedVectors expanded_vectors;
  std::size_t n_instances = data.n();
  if (run.objective == Objective::contrastive_distaug) {
    if (data.kind == DataKind::images) {
      expanded_images = expand_distribution(data.images, plan.dist_set);
      n_instances = expanded_images.images.count;
    } else {
      expanded_vectors = expand_distribution(data.vectors, plan.dist_set);
      n_instances = expanded_vectors.rows.rows();
    }
  }
  if (run.batch_size == 0 || run.batch_size > n_instances)
    throw std::invalid_argument("train: batch_size " + std::to_string(run.batch_size) +
                                " exceeds dataset size " + std::to_string(n_instances));
  if (run.objective != Objective::rotation && run.batch_size < 2)
    throw std::invalid_argument("train: contrastive objectives need batch_size >= 2");

  std::size_t steps_per_epoch = n_instances / run.batch_size;

  TrainResult result;
  if (run.epochs == 0) return result;
  model.meta.objective = run.objective;

  OptimizerState opt = make_optimizer(model, run.base_lr, run.momentum, run.weight_decay,
                                      static_cast<std::uint64_t>(run.epochs * steps_per_epoch));
  Rng shuffle_rng(derive_seed(run.seed, "shuffle"));
  Rng augment_rng(derive_seed(run.seed, "augment"));

  for (std::size_t epoch = 0; epoch < run.epochs; ++epoch) {
    double epoch_loss = 0.0;
    auto batches = epoch_batches(n_instances, run.batch_size, shuffle_rng);
    for (const auto& batch_idx : batches) {
      Tape tape;
      ModelGraph graph(tape, model);
      NodeId loss_node = 0;

      if (run.objective == Objective::rotation) {
        ImageBatch base = data.images.slice(batch_idx);
        loss_node = rotation_loss(tape, graph, plan, base, augment_rng);
      } else {
        Tensor view_a, view_b;
        if (data.kind == DataKind::images) {
          ImageBatch chosen = (run.objective == Objective::contrastive_distaug)
                                  ? expanded_images.images.slice(batch_idx)
                                  : data.images.slice(batch_idx);
          view_a = flatten(sample_view(plan, chosen, augment_rng));
          view_b = flatten(sample_view(plan, chosen, augment_rng));
        } else {
          Tensor chosen = (run.objective == Objective::contrastive_distaug)
                              ? gather_rows(expanded_vectors.rows, batch_idx)
                              : gather_rows(data.vectors, batch_idx);
          view_a = sample_view(plan, chosen, augment_rng);
          view_b = sample_view(plan, chosen, augment_rng);
        }
        NodeId za = graph.forward_gf(tape.leaf(view_a, false), BnMode::train);
        NodeId zb = graph.forward_gf(tape.leaf(view_b, false), BnMode::train);
        loss_node = contrastive_loss(tape, za, zb, run.temperature, run.symmetric_contrastive);
      }

      double loss = tape.value(loss_node)[0];
      double lr = lr_at(opt.step, opt);
      auto grads = tape.backward(loss_node);
      sgd_step(model, graph.param_grads(grads), opt);

      result.trace.push_back({opt.step - 1, lr, loss});
      epoch_loss += loss;
    }
    result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(batches.size()));

    if (run.checkpoint_every > 0 && !run.checkpoint_dir.empty() &&
        (epoch + 1) % run.checkpoint_every == 0) {
      std::filesystem::create_directories(run.checkpoint_dir);
      save_model(model, (std::filesystem::path(run.checkpoint_dir) /
                         ("checkpoint_epoch" + std::to_string(epoch + 1) + ".occ"))
                            .string());
    }
  }
  return result;
}

void write_loss_trace(const std::string& path, const std::vector<StepRecord>& trace) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "step,lr,loss\n";
  char buf[128];
  for (const StepRecord& r : trace) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.step), r.lr, r.loss);
    f << buf;
  }
}

}  // namespace occ
