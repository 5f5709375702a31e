#pragma once

#include <vector>

#include "occ/augment.hpp"
#include "occ/network.hpp"
#include "occ/rng.hpp"
#include "occ/tape.hpp"

namespace occ {

// Raw (pre-normalization) embeddings of two views of the same M instances;
// row i of positives is the second view of the instance behind row i of
// anchors. The loss normalizes internally.
struct ContrastiveBatch {
  Tensor anchors;
  Tensor positives;
  double temperature = 0.2;
  bool symmetric = false;
};

// View-augmented images with the rotation count applied to each.
struct RotationBatch {
  ImageBatch images;
  std::vector<int> labels;
};

// One stochastic view per base image, then all four rotations of it, labels
// y-major: the y=0 copies first, then y=1, etc. Effective batch 4x base.
RotationBatch make_rotation_batch(const AugmentPlan& plan, const ImageBatch& base, Rng& rng);

// Mean softmax cross-entropy of the augmentation classifier q(g(f(.))) over a
// prepared rotation batch; train-mode forward.
NodeId rotation_loss(Tape& tape, ModelGraph& graph, const RotationBatch& batch);
NodeId rotation_loss(Tape& tape, ModelGraph& graph, const AugmentPlan& plan,
                     const ImageBatch& base, Rng& rng);

// InfoNCE-style loss: per anchor i the positive logit pairs the two views of
// instance i, the M-1 negative logits pair anchor i with the other anchors
// (negatives drawn from the anchors' own view only). Log-sum-exp stabilized.
// With symmetric=true the same loss with anchor/positive roles swapped is
// averaged in (off by default).
NodeId contrastive_loss(Tape& tape, NodeId anchors, NodeId positives, double temperature,
                        bool symmetric = false);
NodeId contrastive_loss(Tape& tape, const ContrastiveBatch& batch);

// M instances drawn uniformly without replacement from the expanded dataset,
// each realized as two independent stochastic views.
struct SampledViews {
  ImageBatch view_a;
  ImageBatch view_b;
  std::vector<std::size_t> picked;  // indices into the expanded batch
};

SampledViews assemble_distaug_batch(const ExpandedBatch& expanded, std::size_t m,
                                    const AugmentPlan& plan, Rng& rng);

struct SampledVectorViews {
  Tensor view_a;
  Tensor view_b;
  std::vector<std::size_t> picked;
};

SampledVectorViews assemble_distaug_batch(const ExpandedVectors& expanded, std::size_t m,
                                          const AugmentPlan& plan, Rng& rng);

}  // namespace occ
