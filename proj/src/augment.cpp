#include "tssl/augment.hpp"

#include <algorithm>
#include <cmath>

namespace tssl::augment {

namespace {

void check_prob(float p, const char* name) {
  TSSL_CHECK_CODE(p >= 0.0f && p <= 1.0f, "config",
                  name << " must be in [0,1], got " << p);
}

struct Taps {
  int x0, x1, y0, y1;
  float fx, fy;       // weight of the +1 neighbour
  bool in_x0, in_x1, in_y0, in_y1;
};

Taps bilinear_taps_at(double sx, double sy, int width, int height) {
  Taps t;
  const double fx0 = std::floor(sx);
  const double fy0 = std::floor(sy);
  t.x0 = static_cast<int>(fx0);
  t.y0 = static_cast<int>(fy0);
  t.x1 = t.x0 + 1;
  t.y1 = t.y0 + 1;
  t.fx = static_cast<float>(sx - fx0);
  t.fy = static_cast<float>(sy - fy0);
  t.in_x0 = t.x0 >= 0 && t.x0 < width;
  t.in_x1 = t.x1 >= 0 && t.x1 < width;
  t.in_y0 = t.y0 >= 0 && t.y0 < height;
  t.in_y1 = t.y1 >= 0 && t.y1 < height;
  return t;
}

}  // namespace

void validate_policy(const PolicyConfig& p) {
  TSSL_CHECK_CODE(p.n_ops >= 0 && p.n_ops <= 6, "config",
                  "augment.n_ops must be in [0,6], got " << p.n_ops);
  check_prob(p.flip_p, "augment.flip_p");
  check_prob(p.translate_p, "augment.translate_p");
  check_prob(p.scale_p, "augment.scale_p");
  check_prob(p.brightness_p, "augment.brightness_p");
  check_prob(p.contrast_p, "augment.contrast_p");
  check_prob(p.cut_p, "augment.cut_p");
  TSSL_CHECK_CODE(p.translate_frac >= 0.0f && p.translate_frac <= 1.0f, "config",
                  "augment.translate_frac must be in [0,1], got " << p.translate_frac);
  TSSL_CHECK_CODE(p.scale_min > 0.0f && p.scale_max >= p.scale_min, "config",
                  "augment scale range [" << p.scale_min << "," << p.scale_max << "] is invalid");
  TSSL_CHECK_CODE(p.brightness_max >= 0.0f, "config", "augment.brightness_max must be >= 0");
  TSSL_CHECK_CODE(p.contrast_min > 0.0f && p.contrast_max >= p.contrast_min, "config",
                  "augment contrast range [" << p.contrast_min << "," << p.contrast_max
                                             << "] is invalid");
  TSSL_CHECK_CODE(p.cut_min_frac > 0.0f && p.cut_max_frac >= p.cut_min_frac &&
                      p.cut_max_frac <= 1.0f,
                  "config", "augment cutout range [" << p.cut_min_frac << "," << p.cut_max_frac
                                                     << "] is invalid");
}

AugmentSpec identity_spec() { return AugmentSpec{}; }

AugmentSpec sample_spec(uint64_t seed, const PolicyConfig& policy, int height, int width) {
  validate_policy(policy);
  TSSL_CHECK(height >= 1 && width >= 1,
             "augment extent must be positive, got " << width << "x" << height);
  Rng rng(seed);
  AugmentSpec spec;

  // Draw n_ops distinct ops from the pool of six (partial Fisher-Yates),
  // then resolve fires/magnitudes in a fixed canonical order so the RNG
  // consumption is reproducible.
  int pool[6] = {0, 1, 2, 3, 4, 5};
  bool drawn[6] = {};
  for (int i = 0; i < policy.n_ops; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(6 - i)));
    std::swap(pool[i], pool[j]);
    drawn[pool[i]] = true;
  }

  if (drawn[0] && rng.bernoulli(policy.flip_p)) spec.flip = true;
  if (drawn[1] && rng.bernoulli(policy.translate_p)) {
    const int t = static_cast<int>(std::lround(policy.translate_frac * width));
    if (t > 0) spec.dx = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(2 * t + 1))) - t;
  }
  if (drawn[2] && rng.bernoulli(policy.translate_p)) {
    const int t = static_cast<int>(std::lround(policy.translate_frac * height));
    if (t > 0) spec.dy = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(2 * t + 1))) - t;
  }
  if (drawn[3] && rng.bernoulli(policy.scale_p)) {
    spec.scale = static_cast<float>(rng.uniform(policy.scale_min, policy.scale_max));
  }
  if (drawn[4] && rng.bernoulli(policy.brightness_p)) {
    spec.brightness = static_cast<float>(rng.uniform(-policy.brightness_max,
                                                     policy.brightness_max));
  }
  if (drawn[5] && rng.bernoulli(policy.contrast_p)) {
    spec.contrast = static_cast<float>(rng.uniform(policy.contrast_min, policy.contrast_max));
  }

  if (rng.bernoulli(policy.cut_p)) {
    const int cw = std::max(
        1, static_cast<int>(std::lround(rng.uniform(policy.cut_min_frac, policy.cut_max_frac) *
                                        width)));
    const int ch = std::max(
        1, static_cast<int>(std::lround(rng.uniform(policy.cut_min_frac, policy.cut_max_frac) *
                                        height)));
    const int w = std::min(cw, width);
    const int h = std::min(ch, height);
    spec.cutout.active = true;
    spec.cutout.x0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(width - w + 1)));
    spec.cutout.y0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(height - h + 1)));
    spec.cutout.x1 = spec.cutout.x0 + w;
    spec.cutout.y1 = spec.cutout.y0 + h;
  }
  return spec;
}

bool nn_in_frame(double sx, double sy, int width, int height) {
  const long rx = std::lround(sx);
  const long ry = std::lround(sy);
  return rx >= 0 && rx < width && ry >= 0 && ry < height;
}

engine::Tensor apply_image(const AugmentSpec& spec, const engine::Tensor& image,
                           std::span<const float> fill) {
  TSSL_CHECK(image.rank() == 3, "apply_image expects [C,H,W], got "
                                    << engine::shape_str(image.shape()));
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  TSSL_CHECK(fill.size() == static_cast<size_t>(C),
             "fill must provide one value per channel (" << C << "), got " << fill.size());

  std::vector<float> out(static_cast<size_t>(C) * H * W);
  const float* src = image.data().data();
  const size_t plane = static_cast<size_t>(H) * W;

  if (spec.geometric_identity()) {
    std::copy(image.data().begin(), image.data().end(), out.begin());
  } else {
    for (int oy = 0; oy < H; ++oy) {
      for (int ox = 0; ox < W; ++ox) {
        const auto [sx, sy] = source_coord(spec, W, H, ox, oy);
        const Taps t = bilinear_taps_at(sx, sy, W, H);
        const float w00 = (1.0f - t.fy) * (1.0f - t.fx);
        const float w01 = (1.0f - t.fy) * t.fx;
        const float w10 = t.fy * (1.0f - t.fx);
        const float w11 = t.fy * t.fx;
        const float c00 = (t.in_y0 && t.in_x0) ? w00 : 0.0f;
        const float c01 = (t.in_y0 && t.in_x1) ? w01 : 0.0f;
        const float c10 = (t.in_y1 && t.in_x0) ? w10 : 0.0f;
        const float c11 = (t.in_y1 && t.in_x1) ? w11 : 0.0f;
        const float cov = c00 + c01 + c10 + c11;
        for (int c = 0; c < C; ++c) {
          const float* p = src + static_cast<size_t>(c) * plane;
          float v = 0.0f;
          if (c00 != 0.0f) v += c00 * p[static_cast<size_t>(t.y0) * W + t.x0];
          if (c01 != 0.0f) v += c01 * p[static_cast<size_t>(t.y0) * W + t.x1];
          if (c10 != 0.0f) v += c10 * p[static_cast<size_t>(t.y1) * W + t.x0];
          if (c11 != 0.0f) v += c11 * p[static_cast<size_t>(t.y1) * W + t.x1];
          v += (1.0f - cov) * fill[static_cast<size_t>(c)];
          out[static_cast<size_t>(c) * plane + static_cast<size_t>(oy) * W + ox] = v;
        }
      }
    }
  }

  if (!spec.photometric_identity()) {
    for (auto& v : out) {
      v = (v - 0.5f) * spec.contrast + 0.5f + spec.brightness;
      v = std::clamp(v, 0.0f, 1.0f);
    }
  }

  if (spec.cutout.active) {
    for (int c = 0; c < C; ++c) {
      float* p = out.data() + static_cast<size_t>(c) * plane;
      for (int y = std::max(0, spec.cutout.y0); y < std::min(H, spec.cutout.y1); ++y) {
        for (int x = std::max(0, spec.cutout.x0); x < std::min(W, spec.cutout.x1); ++x) {
          p[static_cast<size_t>(y) * W + x] = fill[static_cast<size_t>(c)];
        }
      }
    }
  }

  return engine::Tensor::from_data(image.shape(), std::move(out), false);
}

engine::IntMask apply_mask(const AugmentSpec& spec, const engine::IntMask& mask,
                           int ignore_index) {
  TSSL_CHECK(mask.shape.size() == 2, "apply_mask expects [H,W], got "
                                         << engine::shape_str(mask.shape));
  const int H = mask.shape[0], W = mask.shape[1];
  engine::IntMask out;
  out.shape = mask.shape;
  out.v.resize(mask.v.size());
  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) {
      const size_t idx = static_cast<size_t>(oy) * W + ox;
      if (spec.cutout.contains(ox, oy)) {
        out.v[idx] = ignore_index;
        continue;
      }
      const auto [sx, sy] = source_coord(spec, W, H, ox, oy);
      if (!nn_in_frame(sx, sy, W, H)) {
        out.v[idx] = ignore_index;
        continue;
      }
      const long rx = std::lround(sx);
      const long ry = std::lround(sy);
      out.v[idx] = mask.v[static_cast<size_t>(ry) * W + static_cast<size_t>(rx)];
    }
  }
  return out;
}

DenseResult apply_dense(const AugmentSpec& spec, const engine::Tensor& probs) {
  TSSL_CHECK(probs.rank() == 3, "apply_dense expects [C,H,W], got "
                                    << engine::shape_str(probs.shape()));
  const int C = probs.dim(0), H = probs.dim(1), W = probs.dim(2);
  const size_t plane = static_cast<size_t>(H) * W;

  DenseResult res;
  res.valid.shape = {H, W};
  res.valid.v.assign(plane, 0);
  std::vector<float> out(static_cast<size_t>(C) * plane, 0.0f);
  const float* src = probs.data().data();

  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) {
      const size_t idx = static_cast<size_t>(oy) * W + ox;
      if (spec.cutout.contains(ox, oy)) continue;
      const auto [sx, sy] = source_coord(spec, W, H, ox, oy);
      if (!nn_in_frame(sx, sy, W, H)) continue;
      res.valid.v[idx] = 1;
      const Taps t = bilinear_taps_at(sx, sy, W, H);
      const float w00 = (t.in_y0 && t.in_x0) ? (1.0f - t.fy) * (1.0f - t.fx) : 0.0f;
      const float w01 = (t.in_y0 && t.in_x1) ? (1.0f - t.fy) * t.fx : 0.0f;
      const float w10 = (t.in_y1 && t.in_x0) ? t.fy * (1.0f - t.fx) : 0.0f;
      const float w11 = (t.in_y1 && t.in_x1) ? t.fy * t.fx : 0.0f;
      const float cov = w00 + w01 + w10 + w11;
      // nn_in_frame guarantees the nearest tap is inside, so cov >= 1/4.
      const float inv = 1.0f / cov;
      for (int c = 0; c < C; ++c) {
        const float* p = src + static_cast<size_t>(c) * plane;
        float v = 0.0f;
        if (w00 != 0.0f) v += w00 * p[static_cast<size_t>(t.y0) * W + t.x0];
        if (w01 != 0.0f) v += w01 * p[static_cast<size_t>(t.y0) * W + t.x1];
        if (w10 != 0.0f) v += w10 * p[static_cast<size_t>(t.y1) * W + t.x0];
        if (w11 != 0.0f) v += w11 * p[static_cast<size_t>(t.y1) * W + t.x1];
        out[static_cast<size_t>(c) * plane + idx] = v * inv;
      }
    }
  }
  res.probs = engine::Tensor::from_data(probs.shape(), std::move(out), false);
  return res;
}

engine::Tensor flip_image(const engine::Tensor& image) {
  TSSL_CHECK(image.rank() == 3, "flip_image expects [C,H,W], got "
                                    << engine::shape_str(image.shape()));
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  std::vector<float> out(image.data().size());
  const float* src = image.data().data();
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      const float* row = src + (static_cast<size_t>(c) * H + y) * W;
      float* dst = out.data() + (static_cast<size_t>(c) * H + y) * W;
      for (int x = 0; x < W; ++x) dst[x] = row[W - 1 - x];
    }
  }
  return engine::Tensor::from_data(image.shape(), std::move(out), false);
}

engine::IntMask flip_mask(const engine::IntMask& mask) {
  TSSL_CHECK(mask.shape.size() == 2, "flip_mask expects [H,W], got "
                                         << engine::shape_str(mask.shape));
  const int H = mask.shape[0], W = mask.shape[1];
  engine::IntMask out;
  out.shape = mask.shape;
  out.v.resize(mask.v.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      out.v[static_cast<size_t>(y) * W + x] = mask.v[static_cast<size_t>(y) * W + (W - 1 - x)];
    }
  }
  return out;
}

}  // namespace tssl::augment
