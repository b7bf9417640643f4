#pragma once

#include <string>
#include <vector>

#include "tssl/engine/tensor.hpp"

namespace tssl::engine {

// Ordered, uniquely named collection of parameter tensors. Order is insertion
// order and is the iteration/serialization order everywhere, so runs are
// reproducible. Entries hold handles: two sets may alias the same tensor.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  void add(std::string name, Tensor param);
  size_t size() const { return entries_.size(); }
  const Entry& at(size_t i) const { return entries_[i]; }
  Entry& at(size_t i) { return entries_[i]; }
  const Tensor* find(std::string_view name) const;
  Tensor* find(std::string_view name);
  bool contains_tensor(const void* id) const;
  void zero_grad();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
};

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// First/second moment state index-aligned with the ParamSet it was built for.
class AdamState {
 public:
  AdamState(const ParamSet& params, AdamConfig cfg);

  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return t_; }

  friend void adam_step(ParamSet& params, AdamState& state);

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

// One Adam update with bias correction. Every parameter must carry a
// gradient buffer (zero_grad before backward guarantees this).
void adam_step(ParamSet& params, AdamState& state);

// teacher <- alpha * teacher + (1 - alpha) * student, entrywise. The two sets
// must have identical names, order and shapes.
void ema_update(ParamSet& teacher, const ParamSet& student, float alpha);

}  // namespace tssl::engine
