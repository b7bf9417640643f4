#include "tssl/eval.hpp"

namespace tssl::eval {

ConfusionMatrix::ConfusionMatrix(int num_classes) : num_classes_(num_classes) {
  TSSL_CHECK(num_classes >= 1, "confusion matrix needs >= 1 class, got " << num_classes);
  counts_.assign(static_cast<size_t>(num_classes) * num_classes, 0);
}

void ConfusionMatrix::add(const engine::IntMask& gt, const engine::IntMask& pred,
                          int ignore_index) {
  TSSL_CHECK(gt.shape == pred.shape, "confusion matrix input shapes differ: "
                                         << engine::shape_str(gt.shape) << " vs "
                                         << engine::shape_str(pred.shape));
  for (size_t i = 0; i < gt.v.size(); ++i) {
    const int32_t g = gt.v[i];
    if (g == ignore_index) {
      ++ignored_;
      continue;
    }
    const int32_t p = pred.v[i];
    TSSL_CHECK(g >= 0 && g < num_classes_,
               "ground-truth label " << g << " out of range [0," << num_classes_ << ")");
    TSSL_CHECK(p >= 0 && p < num_classes_,
               "predicted label " << p << " out of range [0," << num_classes_ << ")");
    ++counts_[static_cast<size_t>(g) * num_classes_ + static_cast<size_t>(p)];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  TSSL_CHECK(other.num_classes_ == num_classes_,
             "cannot merge confusion matrices with different class counts");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
}

int64_t ConfusionMatrix::at(int gt, int pred) const {
  TSSL_CHECK(gt >= 0 && gt < num_classes_ && pred >= 0 && pred < num_classes_,
             "confusion matrix index out of range");
  return counts_[static_cast<size_t>(gt) * num_classes_ + static_cast<size_t>(pred)];
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts_) t += c;
  return t;
}

MiouReport compute_miou(const ConfusionMatrix& cm) {
  const int C = cm.num_classes();
  MiouReport report;
  report.per_class.resize(static_cast<size_t>(C));
  double sum = 0.0;
  for (int c = 0; c < C; ++c) {
    const int64_t tp = cm.at(c, c);
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < C; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    auto& entry = report.per_class[static_cast<size_t>(c)];
    entry.cls = c;
    const int64_t uni = tp + fp + fn;
    entry.present = uni > 0;
    if (entry.present) {
      entry.iou = static_cast<double>(tp) / static_cast<double>(uni);
      sum += entry.iou;
      ++report.present_classes;
    }
  }
  TSSL_CHECK(report.present_classes > 0,
             "mean IoU is undefined: no class is present in ground truth or predictions");
  report.miou = sum / report.present_classes;
  return report;
}

}  // namespace tssl::eval
