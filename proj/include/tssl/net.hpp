#pragma once

#include <utility>
#include <vector>

#include "tssl/engine/ops.hpp"
#include "tssl/engine/optim.hpp"

namespace tssl::net {

// Fully convolutional segmentation net: a stack of 3x3 conv+relu blocks
// (the first one strided) followed by a 1x1 classifier and a bilinear
// upsample back to the input resolution. No normalization layers.
struct ConvSpec {
  int out_ch = 0;
  int kernel = 3;
  int stride = 1;
};

struct NetConfig {
  int in_channels = 3;
  int num_classes = 4;
  std::vector<ConvSpec> trunk = {{16, 3, 2}, {32, 3, 1}, {32, 3, 1}, {64, 3, 1}, {64, 3, 1}};
};

void validate_net(const NetConfig& cfg);

// Which auxiliary decoder the net carries. The auxiliary branch shares the
// student trunk by reference and owns only its tail:
//   stage2: shares all trunk blocks except the last, owns a half-width
//           replacement for the last trunk block plus its own classifier;
//   stage3: shares the whole trunk, owns only its classifier.
enum class AuxKind { none, stage2, stage3 };

const char* aux_kind_name(AuxKind kind);

// Student branch, optional auxiliary branch, and an EMA teacher that mirrors
// the student's parameters but never joins the autodiff graph.
class MultiTaskNet {
 public:
  MultiTaskNet(NetConfig cfg, AuxKind aux, uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  AuxKind aux_kind() const { return aux_; }

  // Student logits [N,num_classes,H,W] at the input resolution.
  engine::Tensor forward(const engine::Tensor& x) const;
  // Student and auxiliary logits computed over one shared trunk pass.
  std::pair<engine::Tensor, engine::Tensor> forward_with_aux(const engine::Tensor& x) const;
  // Teacher class probabilities; always a constant wrt the graph.
  engine::Tensor forward_teacher(const engine::Tensor& x) const;

  engine::ParamSet& student_params() { return student_; }
  const engine::ParamSet& student_params() const { return student_; }
  engine::ParamSet& aux_own_params() { return aux_own_; }
  const engine::ParamSet& aux_own_params() const { return aux_own_; }
  engine::ParamSet& teacher_params() { return teacher_; }
  const engine::ParamSet& teacher_params() const { return teacher_; }

  // Auxiliary view: shared trunk handles followed by the branch's own tail.
  engine::ParamSet aux_view() const;
  // Every parameter the optimizer owns: student plus aux-own (teacher
  // excluded by construction). Deterministic order, deduplicated by identity.
  engine::ParamSet trainable_params() const;
  // Student + aux-own + teacher, for checkpoints.
  engine::ParamSet all_params() const;

  void teacher_copy_from_student();
  // Copy values for every student parameter from `src` by name ("f.*").
  // Entries in `src` that do not belong to the student branch are ignored.
  void load_student_params(const engine::ParamSet& src);

 private:
  struct Block {
    ConvSpec spec;
    engine::Tensor w, b;
  };

  engine::Tensor run_trunk(const engine::Tensor& x, const std::vector<Block>& blocks,
                           size_t count) const;
  engine::Tensor run_head(const engine::Tensor& h, const Block& head, int out_h, int out_w) const;

  NetConfig cfg_;
  AuxKind aux_;
  std::vector<Block> f_blocks_;    // trunk convs
  Block f_head_;                   // 1x1 classifier
  std::vector<Block> aux_blocks_;  // aux-own trunk replacements (stage2 only)
  Block aux_head_;                 // aux classifier (when aux != none)
  engine::ParamSet student_;
  engine::ParamSet aux_own_;
  engine::ParamSet teacher_;
};

}  // namespace tssl::net
