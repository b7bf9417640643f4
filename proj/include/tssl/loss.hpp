#pragma once

#include <optional>

#include "tssl/augment.hpp"
#include "tssl/net.hpp"

namespace tssl::loss {

struct LossWeights {
  float lambda1 = 0.5f;  // consistency term
  float lambda2 = 0.5f;  // auxiliary pseudo-label term
};

// One sample as the loss sees it: the (possibly weak-flipped) clean image,
// its targets in the same orientation, and the strong-augmentation spec that
// transports the student's input and every target through one coordinate
// map. Sub-batch 2 items carry the identity spec.
struct Item {
  engine::Tensor image;                    // [C,H,W]
  std::optional<engine::IntMask> gt;       // required on sub-batch 2
  std::optional<engine::IntMask> pseudo;   // required when the aux term is on
  augment::AugmentSpec spec;
};

struct StageBatch {
  std::vector<Item> sub1;  // drawn from labelled+unlabelled
  std::vector<Item> sub2;  // drawn from labelled only
};

struct Options {
  int stage = 1;                 // 1, 2 or 3
  LossWeights weights;
  bool consistency = true;       // supervised-consistency term on/off
  bool aux_task = true;          // auxiliary pseudo-label term on/off
  bool soft_target = true;       // teacher target: distribution vs argmax
  int ignore_index = 255;
  std::vector<float> fill;       // per-channel fill for image transport
};

struct Terms {
  engine::Tensor total;  // scalar, in the graph
  double seg = 0.0;
  double con = 0.0;
  double pl = 0.0;
};

// Supervised term: mean over sub-batch-2 samples of per-pixel cross-entropy
// between the student logits on the clean image and the ground truth.
engine::Tensor supervised_loss(const net::MultiTaskNet& net, const std::vector<Item>& sub2,
                               int ignore_index);

// Full stage objective:
//   stage 1:            L = L_sup
//   stages 2 and 3:     L = L_sup + lambda1 * L_cons + lambda2 * L_aux
// where L_cons matches the student on the augmented view against the
// transported teacher prediction on the clean view (both sub-batches; the
// identity spec on sub-batch 2), and L_aux matches the auxiliary branch on
// the augmented view against the transported pseudo-mask. A term is skipped
// (and reported as 0) when its switch is off or its weight is zero; skipping
// is exact because adding a zero-weighted term never changes the objective.
Terms stage_loss(const net::MultiTaskNet& net, const StageBatch& batch, const Options& opts);

}  // namespace tssl::loss
