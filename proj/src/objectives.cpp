#include "occ/objectives.hpp"

#include <stdexcept>

namespace occ {

namespace {

constexpr double kMaskFill = -1e30;  // finite, exp underflows to exactly 0

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

NodeId one_direction_loss(Tape& tape, NodeId anchors, NodeId positives, double temperature) {
  NodeId phi_a = tape.l2_normalize_rows(anchors);
  NodeId phi_p = tape.l2_normalize_rows(positives);
  NodeId pos = tape.rowwise_dot(phi_a, phi_p);   // [M x 1]
  NodeId neg = tape.matmul_nt(phi_a, phi_a);     // [M x M], diagonal is self
  NodeId logits = tape.concat_cols(pos, neg);
  logits = tape.scale(logits, 1.0 / temperature);
  logits = tape.mask_shifted_diagonal(logits, 1, kMaskFill);
  std::vector<int> labels(tape.value(anchors).rows(), 0);
  return tape.softmax_cross_entropy(logits, labels);
}

}  // namespace

RotationBatch make_rotation_batch(const AugmentPlan& plan, const ImageBatch& base, Rng& rng) {
  require(base.count > 0, "rotation batch: empty base batch");
  require(base.height == base.width, "rotation batch: images must be square");
  ImageBatch view = sample_view(plan, base, rng);
  RotationBatch out;
  for (int y = 0; y < 4; ++y) {
    out.images.append(rot90(view, y));
    for (std::size_t i = 0; i < base.count; ++i) out.labels.push_back(y);
  }
  return out;
}

NodeId rotation_loss(Tape& tape, ModelGraph& graph, const RotationBatch& batch) {
  NodeId x = tape.leaf(flatten(batch.images), false);
  NodeId logits = graph.forward_q(x, BnMode::train);
  return tape.softmax_cross_entropy(logits, batch.labels);
}

NodeId rotation_loss(Tape& tape, ModelGraph& graph, const AugmentPlan& plan,
                     const ImageBatch& base, Rng& rng) {
  RotationBatch batch = make_rotation_batch(plan, base, rng);
  return rotation_loss(tape, graph, batch);
}

NodeId contrastive_loss(Tape& tape, NodeId anchors, NodeId positives, double temperature,
                        bool symmetric) {
  const Tensor& av = tape.value(anchors);
  const Tensor& pv = tape.value(positives);
  require(av.rank() == 2 && av.same_shape(pv),
          "contrastive loss: anchors and positives must be matching [M x d] tensors");
  require(av.rows() >= 2, "contrastive loss: M >= 2 required (no negatives otherwise)");
  require(temperature > 0.0, "contrastive loss: temperature must be positive");

  NodeId fwd = one_direction_loss(tape, anchors, positives, temperature);
  if (!symmetric) return fwd;
  NodeId bwd = one_direction_loss(tape, positives, anchors, temperature);
  return tape.add(tape.scale(fwd, 0.5), tape.scale(bwd, 0.5));
}

NodeId contrastive_loss(Tape& tape, const ContrastiveBatch& batch) {
  NodeId a = tape.leaf(batch.anchors, true);
  NodeId p = tape.leaf(batch.positives, true);
  return contrastive_loss(tape, a, p, batch.temperature, batch.symmetric);
}

namespace {

std::vector<std::size_t> pick_without_replacement(std::size_t total, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t j = k + rng.uniform_below(total - k);
    std::swap(idx[k], idx[j]);
  }
  idx.resize(m);
  return idx;
}

}  // namespace

SampledViews assemble_distaug_batch(const ExpandedBatch& expanded, std::size_t m,
                                    const AugmentPlan& plan, Rng& rng) {
  require(expanded.images.count > 0, "assemble_distaug_batch: empty expanded dataset");
  require(m <= expanded.images.count,
          "assemble_distaug_batch: batch size exceeds expanded dataset size");
  SampledViews out;
  out.picked = pick_without_replacement(expanded.images.count, m, rng);
  ImageBatch chosen = expanded.images.slice(out.picked);
  out.view_a = sample_view(plan, chosen, rng);
  out.view_b = sample_view(plan, chosen, rng);
  return out;
}

SampledVectorViews assemble_distaug_batch(const ExpandedVectors& expanded, std::size_t m,
                                          const AugmentPlan& plan, Rng& rng) {
  require(expanded.rows.rows() > 0, "assemble_distaug_batch: empty expanded dataset");
  require(m <= expanded.rows.rows(),
          "assemble_distaug_batch: batch size exceeds expanded dataset size");
  SampledVectorViews out;
  out.picked = pick_without_replacement(expanded.rows.rows(), m, rng);
  Tensor chosen({m, expanded.rows.cols()});
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < expanded.rows.cols(); ++j)
      chosen.at(k, j) = expanded.rows.at(out.picked[k], j);
  out.view_a = sample_view(plan, chosen, rng);
  out.view_b = sample_view(plan, chosen, rng);
  return out;
}

}  // namespace occ
