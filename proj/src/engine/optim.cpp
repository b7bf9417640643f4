#include "tssl/engine/optim.hpp"

#include <cmath>

namespace tssl::engine {

void ParamSet::add(std::string name, Tensor param) {
  TSSL_CHECK(!name.empty(), "parameter name must be non-empty");
  TSSL_CHECK(param.defined(), "parameter '" << name << "' is undefined");
  TSSL_CHECK(find(name) == nullptr, "duplicate parameter name '" << name << "'");
  entries_.push_back({std::move(name), std::move(param)});
}

const Tensor* ParamSet::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

Tensor* ParamSet::find(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

bool ParamSet::contains_tensor(const void* id) const {
  for (const auto& e : entries_) {
    if (e.tensor.id() == id) return true;
  }
  return false;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

AdamState::AdamState(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  TSSL_CHECK(cfg.lr > 0.0f, "Adam learning rate must be positive, got " << cfg.lr);
  TSSL_CHECK(cfg.beta1 >= 0.0f && cfg.beta1 < 1.0f, "Adam beta1 must be in [0,1)");
  TSSL_CHECK(cfg.beta2 >= 0.0f && cfg.beta2 < 1.0f, "Adam beta2 must be in [0,1)");
  TSSL_CHECK(cfg.eps > 0.0f, "Adam eps must be positive");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& e : params) {
    m_.emplace_back(e.tensor.data().size(), 0.0f);
    v_.emplace_back(e.tensor.data().size(), 0.0f);
  }
}

void adam_step(ParamSet& params, AdamState& state) {
  TSSL_CHECK(params.size() == state.m_.size(),
             "optimizer state was built for " << state.m_.size() << " parameters, got "
                                              << params.size());
  ++state.t_;
  const auto& c = state.cfg_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(c.beta1), static_cast<double>(state.t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(c.beta2), static_cast<double>(state.t_));

  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i).tensor;
    TSSL_CHECK(p.has_grad(), "parameter '" << params.at(i).name
                                           << "' has no gradient; call zero_grad then backward");
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    TSSL_CHECK_CODE(m.size() == g.size(), "internal", "optimizer state shape drift");
    for (size_t j = 0; j < g.size(); ++j) {
      const float gj = g[j];
      m[j] = c.beta1 * m[j] + (1.0f - c.beta1) * gj;
      v[j] = c.beta2 * v[j] + (1.0f - c.beta2) * gj * gj;
      const float mhat = static_cast<float>(m[j] / bc1);
      const float vhat = static_cast<float>(v[j] / bc2);
      w[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

void ema_update(ParamSet& teacher, const ParamSet& student, float alpha) {
  TSSL_CHECK(alpha >= 0.0f && alpha <= 1.0f, "EMA decay must be in [0,1], got " << alpha);
  TSSL_CHECK(teacher.size() == student.size(),
             "EMA parameter sets differ in size: " << teacher.size() << " vs " << student.size());
  for (size_t i = 0; i < teacher.size(); ++i) {
    auto& te = teacher.at(i);
    const auto& se = student.at(i);
    TSSL_CHECK(te.name == se.name, "EMA parameter name mismatch at index "
                                       << i << ": '" << te.name << "' vs '" << se.name << "'");
    TSSL_CHECK(same_shape(te.tensor.shape(), se.tensor.shape()),
               "EMA shape mismatch for '" << te.name << "'");
    auto t = te.tensor.mutable_data();
    auto s = se.tensor.data();
    for (size_t j = 0; j < t.size(); ++j) {
      t[j] = alpha * t[j] + (1.0f - alpha) * s[j];
    }
  }
}

}  // namespace tssl::engine
