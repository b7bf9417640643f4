#pragma once

// Fixture plumbing shared by the test suites: random tensors with a seeded
// generator and conversions between library tensors and the oracle's double
// arrays.

#include <vector>

#include "oracle.hpp"
#include "tssl/common.hpp"
#include "tssl/engine/tensor.hpp"

namespace testutil {

inline tssl::engine::Tensor rand_tensor(const tssl::engine::Shape& shape, tssl::Rng& rng,
                                        float lo, float hi, bool requires_grad) {
  std::vector<float> v(tssl::engine::shape_numel(shape));
  for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return tssl::engine::Tensor::from_data(shape, v, requires_grad);
}

// Values bounded away from zero, for probing kinked ops like relu.
inline tssl::engine::Tensor rand_tensor_away_from_zero(const tssl::engine::Shape& shape,
                                                       tssl::Rng& rng, float mag_lo,
                                                       float mag_hi, bool requires_grad) {
  std::vector<float> v(tssl::engine::shape_numel(shape));
  for (float& x : v) {
    const float mag = static_cast<float>(rng.uniform(mag_lo, mag_hi));
    x = rng.bernoulli(0.5) ? mag : -mag;
  }
  return tssl::engine::Tensor::from_data(shape, v, requires_grad);
}

inline oracle::D4 to_d4(const tssl::engine::Tensor& t) {
  const auto& s = t.shape();
  oracle::D4 out;
  if (s.size() == 4)
    out = oracle::D4(s[0], s[1], s[2], s[3]);
  else if (s.size() == 3)
    out = oracle::D4(1, s[0], s[1], s[2]);
  else if (s.size() == 1)
    out = oracle::D4(1, 1, 1, s[0]);
  else
    throw std::runtime_error("to_d4: unsupported rank");
  const auto data = t.data();
  for (size_t i = 0; i < data.size(); ++i) out.v[i] = data[i];
  return out;
}

inline std::vector<double> to_dvec(const tssl::engine::Tensor& t) {
  const auto data = t.data();
  return {data.begin(), data.end()};
}

inline std::vector<double> grad_dvec(const tssl::engine::Tensor& t) {
  const auto g = t.grad();
  return {g.begin(), g.end()};
}

inline tssl::engine::Tensor from_doubles(const tssl::engine::Shape& shape,
                                         const std::vector<double>& v, bool requires_grad) {
  std::vector<float> f(v.size());
  for (size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
  return tssl::engine::Tensor::from_data(shape, f, requires_grad);
}

}  // namespace testutil
