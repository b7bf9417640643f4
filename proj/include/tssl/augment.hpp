#pragma once

#include <span>

#include "tssl/engine/tensor.hpp"

namespace tssl::augment {

// Strong-augmentation policy: a pool of six ops (horizontal flip, integer
// translate-x/y, scale about the image center, additive brightness, contrast
// about mid-gray). Each draw picks n_ops distinct ops, fires each with its
// per-op probability, then independently applies cutout with probability
// cut_p. Probabilities are in [0,1]; magnitude ranges are validated.
struct PolicyConfig {
  int n_ops = 2;
  float flip_p = 0.5f;
  float translate_p = 1.0f;
  float translate_frac = 0.125f;  // max |shift| as a fraction of the extent
  float scale_p = 1.0f;
  float scale_min = 0.75f;
  float scale_max = 1.25f;
  float brightness_p = 1.0f;
  float brightness_max = 0.2f;
  float contrast_p = 1.0f;
  float contrast_min = 0.7f;
  float contrast_max = 1.4f;
  float cut_p = 0.5f;
  float cut_min_frac = 0.15f;  // cutout extent as a fraction of H/W
  float cut_max_frac = 0.35f;
};

void validate_policy(const PolicyConfig& policy);

struct CutoutRect {
  bool active = false;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)

  bool contains(int x, int y) const { return active && x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// A fully sampled augmentation: the same spec transports images (bilinear),
// label masks (nearest neighbour) and dense distributions (bilinear +
// renormalization) through one shared coordinate map, so the three views of
// a sample stay pixel-aligned.
struct AugmentSpec {
  bool flip = false;
  int dx = 0, dy = 0;
  float scale = 1.0f;
  float brightness = 0.0f;
  float contrast = 1.0f;
  CutoutRect cutout;

  bool geometric_identity() const { return !flip && dx == 0 && dy == 0 && scale == 1.0f; }
  bool photometric_identity() const { return brightness == 0.0f && contrast == 1.0f; }
  bool identity() const {
    return geometric_identity() && photometric_identity() && !cutout.active;
  }
};

AugmentSpec identity_spec();

// Deterministic draw: the same (seed, policy, extent) always yields the same
// spec. Ops are drawn without replacement and resolved in a fixed order.
AugmentSpec sample_spec(uint64_t seed, const PolicyConfig& policy, int height, int width);

// Source coordinate for output pixel (ox,oy): the inverse of
// flip -> scale(center) -> translate, evaluated in double so that integer
// translations and flips are exact.
inline std::pair<double, double> source_coord(const AugmentSpec& spec, int width, int height,
                                              int ox, int oy) {
  double sx = static_cast<double>(ox) - spec.dx;
  double sy = static_cast<double>(oy) - spec.dy;
  if (spec.scale != 1.0f) {
    const double cx = (width - 1) * 0.5;
    const double cy = (height - 1) * 0.5;
    const double inv = 1.0 / static_cast<double>(spec.scale);
    sx = cx + (sx - cx) * inv;
    sy = cy + (sy - cy) * inv;
  }
  if (spec.flip) sx = static_cast<double>(width - 1) - sx;
  return {sx, sy};
}

// Shared validity rule for label/dense transport: the nearest source pixel
// must land inside the frame. Keeping one rule makes the mask's ignore set
// and the dense validity mask coincide exactly.
bool nn_in_frame(double sx, double sy, int width, int height);

// Bilinear image transport with out-of-frame blending towards `fill`
// (per-channel, usually the dataset mean), then brightness/contrast about
// mid-gray with clamping to [0,1], then cutout filled with `fill`.
engine::Tensor apply_image(const AugmentSpec& spec, const engine::Tensor& image,
                           std::span<const float> fill);

// Nearest-neighbour label transport; out-of-frame and cutout pixels become
// ignore_index. No photometric component.
engine::IntMask apply_mask(const AugmentSpec& spec, const engine::IntMask& mask,
                           int ignore_index);

// Dense distribution transport: bilinear per channel over in-frame taps,
// renormalized by the tap coverage so valid pixels still sum to 1. The
// returned validity plane is exactly the complement of apply_mask's ignore
// set for the same spec.
struct DenseResult {
  engine::Tensor probs;     // [C,H,W]
  engine::BoolMask valid;   // [H,W]
};
DenseResult apply_dense(const AugmentSpec& spec, const engine::Tensor& probs);

// Horizontal flips used as the weak, always-safe base augmentation.
engine::Tensor flip_image(const engine::Tensor& image);  // [C,H,W]
engine::IntMask flip_mask(const engine::IntMask& mask);  // [H,W]

}  // namespace tssl::augment
