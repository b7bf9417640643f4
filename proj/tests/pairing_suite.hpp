#pragma once

// Exhaustive checks that image, mask and dense-probability transport share
// one coordinate map. The reference map is re-derived here from the
// documented forward order (flip, then scale about the center, then
// translate) instead of calling the library's source_coord.

#include <cmath>
#include <cstdio>
#include <string>

#include "helpers.hpp"
#include "tssl/augment.hpp"
#include "tssl/engine/ops.hpp"

namespace pairsuite {

struct SuiteResult {
  bool ok = true;
  int64_t checks = 0;
  std::string detail;

  void expect(bool cond, const char* what) {
    ++checks;
    if (!cond && ok) {
      ok = false;
      detail = std::string("first failure: ") + what;
    }
  }
};

// Independent inverse map: invert translate, then scale, then flip.
inline std::pair<double, double> ref_source(const tssl::augment::AugmentSpec& spec, int w,
                                            int h, int ox, int oy) {
  double sx = ox - static_cast<double>(spec.dx);
  double sy = oy - static_cast<double>(spec.dy);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  sx = cx + (sx - cx) / spec.scale;
  sy = cy + (sy - cy) / spec.scale;
  if (spec.flip) sx = (w - 1) - sx;
  return {sx, sy};
}

inline bool ref_nn_in(double sx, double sy, int w, int h) {
  const long nx = std::lround(sx), ny = std::lround(sy);
  return nx >= 0 && nx < w && ny >= 0 && ny < h;
}

// Random per-pixel distributions over c classes on an n x n grid.
inline tssl::engine::Tensor random_probs(int c, int n, tssl::Rng& rng) {
  std::vector<float> v(static_cast<size_t>(c) * n * n);
  for (int p = 0; p < n * n; ++p) {
    double z = 0;
    std::vector<double> raw(c);
    for (int ic = 0; ic < c; ++ic) {
      raw[ic] = rng.uniform(0.01, 1.0);
      z += raw[ic];
    }
    for (int ic = 0; ic < c; ++ic)
      v[static_cast<size_t>(ic) * n * n + p] = static_cast<float>(raw[ic] / z);
  }
  return tssl::engine::Tensor::from_data({c, n, n}, v);
}

inline tssl::engine::IntMask random_mask(int c, int n, tssl::Rng& rng) {
  tssl::engine::IntMask m;
  m.shape = {n, n};
  m.v.resize(static_cast<size_t>(n) * n);
  for (auto& x : m.v) x = static_cast<int32_t>(rng.uniform_int(c));
  return m;
}

inline tssl::engine::IntMask argmax_of(const tssl::engine::Tensor& probs) {
  return tssl::engine::argmax_channels(probs);
}

inline SuiteResult run_pairing_suite(uint64_t seed) {
  using namespace tssl;
  using namespace tssl::augment;
  using engine::IntMask;
  using engine::Tensor;
  SuiteResult res;
  Rng rng(seed);
  const int n = 8, c = 3, ignore = 255;

  // cutout variants exercised alongside the geometric sweep
  const CutoutRect cuts[] = {
      {false, 0, 0, 0, 0}, {true, 2, 3, 5, 7}, {true, 0, 0, 8, 2}, {true, 6, 6, 8, 8}};

  // 1) Exhaustive integer sweep: every translation that can still leave
  //    in-frame pixels, both flips, each cutout. Integer maps make bilinear
  //    degenerate to a single tap, so argmax must commute exactly.
  for (int flip = 0; flip < 2; ++flip)
    for (int dx = -n; dx <= n; ++dx)
      for (int dy = -n; dy <= n; ++dy)
        for (const CutoutRect& cut : cuts) {
          AugmentSpec spec;
          spec.flip = flip != 0;
          spec.dx = dx;
          spec.dy = dy;
          spec.cutout = cut;

          const Tensor probs = random_probs(c, n, rng);
          const IntMask mask = argmax_of(probs);
          const IntMask moved = apply_mask(spec, mask, ignore);
          const DenseResult dense = apply_dense(spec, probs);
          const IntMask dense_arg = engine::argmax_channels(dense.probs);

          for (int oy = 0; oy < n; ++oy)
            for (int ox = 0; ox < n; ++ox) {
              const size_t i = static_cast<size_t>(oy) * n + ox;
              const auto [sx, sy] = ref_source(spec, n, n, ox, oy);
              const bool want_valid = ref_nn_in(sx, sy, n, n) && !cut.contains(ox, oy);
              res.expect((dense.valid.v[i] != 0) == want_valid, "dense validity vs ref map");
              res.expect((moved.v[i] == ignore) == !want_valid, "mask ignore vs ref map");
              if (!want_valid) continue;
              const long nx = std::lround(sx), ny = std::lround(sy);
              res.expect(moved.v[i] == mask.v[static_cast<size_t>(ny) * n + nx],
                         "mask equals NN transport");
              res.expect(dense_arg.v[i] == moved.v[i], "argmax commutes with transport");
              // single-tap transport keeps the distribution bit-identical
              for (int ic = 0; ic < c; ++ic)
                res.expect(dense.probs.data()[static_cast<size_t>(ic) * n * n + i] ==
                               probs.data()[(static_cast<size_t>(ic) * n + ny) * n + nx],
                           "integer map moves probabilities verbatim");
            }
        }

  // 2) Flip involution on images: exact, including photometric-free spec path.
  for (int trial = 0; trial < 20; ++trial) {
    Tensor img = testutil::rand_tensor({3, n, n}, rng, 0, 1, false);
    const std::vector<float> fill = {0.5f, 0.5f, 0.5f};
    AugmentSpec flip_spec;
    flip_spec.flip = true;
    const Tensor once = apply_image(flip_spec, img, fill);
    const Tensor twice = apply_image(flip_spec, once, fill);
    const Tensor via_free = flip_image(img);
    const auto a = img.data(), b = twice.data(), f1 = via_free.data();
    for (size_t i = 0; i < a.size(); ++i) {
      res.expect(a[i] == b[i], "flip twice restores the image exactly");
      res.expect(f1[i] == once.data()[i], "apply_image(flip) equals flip_image");
    }
    const IntMask m = random_mask(c, n, rng);
    const IntMask m2 = flip_mask(flip_mask(m));
    for (size_t i = 0; i < m.v.size(); ++i)
      res.expect(m.v[i] == m2.v[i], "mask flip involution");
  }

  // 3) Fractional scales: validity still matches the shared rule and the
  //    mask still equals NN transport (argmax commutation is only claimed
  //    for integer maps).
  for (int trial = 0; trial < 60; ++trial) {
    AugmentSpec spec;
    spec.flip = rng.bernoulli(0.5);
    spec.dx = static_cast<int>(rng.uniform_int(7)) - 3;
    spec.dy = static_cast<int>(rng.uniform_int(7)) - 3;
    spec.scale = static_cast<float>(rng.uniform(0.75, 1.25));
    if (rng.bernoulli(0.5)) spec.cutout = {true, 1, 1, 4, 6};

    const Tensor probs = random_probs(c, n, rng);
    const IntMask mask = random_mask(c, n, rng);
    const IntMask moved = apply_mask(spec, mask, ignore);
    const DenseResult dense = apply_dense(spec, probs);

    for (int oy = 0; oy < n; ++oy)
      for (int ox = 0; ox < n; ++ox) {
        const size_t i = static_cast<size_t>(oy) * n + ox;
        const auto [sx, sy] = ref_source(spec, n, n, ox, oy);
        const bool want_valid =
            ref_nn_in(sx, sy, n, n) && !spec.cutout.contains(ox, oy);
        res.expect((dense.valid.v[i] != 0) == want_valid, "fractional: validity shared");
        res.expect((moved.v[i] == ignore) == !want_valid, "fractional: ignore shared");
        if (!want_valid) continue;
        const long nx = std::lround(sx), ny = std::lround(sy);
        res.expect(moved.v[i] == mask.v[static_cast<size_t>(ny) * n + nx],
                   "fractional: mask is NN transport");
        double s = 0;
        for (int ic = 0; ic < c; ++ic)
          s += dense.probs.data()[static_cast<size_t>(ic) * n * n + i];
        res.expect(std::fabs(s - 1.0) < 1e-5, "fractional: valid pixels renormalized");
      }
  }

  if (res.ok) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%lld checks, all exact", static_cast<long long>(res.checks));
    res.detail = buf;
  }
  return res;
}

}  // namespace pairsuite
