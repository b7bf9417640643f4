#pragma once

#include <optional>
#include <vector>

#include "tssl/engine/tensor.hpp"

namespace tssl::eval {

// C x C confusion counts, rows = ground truth, cols = prediction. Pixels
// whose ground truth equals ignore_index are counted separately and never
// enter the matrix.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(const engine::IntMask& gt, const engine::IntMask& pred, int ignore_index);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return num_classes_; }
  int64_t at(int gt, int pred) const;
  int64_t ignored() const { return ignored_; }
  int64_t total() const;

 private:
  int num_classes_;
  int64_t ignored_ = 0;
  std::vector<int64_t> counts_;
};

struct ClassIou {
  int cls = 0;
  bool present = false;  // TP+FP+FN > 0
  double iou = 0.0;
};

struct MiouReport {
  std::vector<ClassIou> per_class;
  double miou = 0.0;  // mean over present classes only
  int present_classes = 0;
};

// Fails if no class is present at all (nothing to average).
MiouReport compute_miou(const ConfusionMatrix& cm);

}  // namespace tssl::eval
