#include "tssl/engine/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tssl::engine {

namespace {

using ColMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using MapCol = Eigen::Map<ColMat>;
using MapColConst = Eigen::Map<const ColMat>;

void check_finite(const Tensor& t, const char* what) {
  for (float v : t.data()) {
    TSSL_CHECK(std::isfinite(v), what << " contains a non-finite value");
  }
}

struct ConvGeom {
  int n, cin, h, w;
  int k, kh, kw;
  int stride, pad;
  int oh, ow;
  int ckk() const { return cin * kh * kw; }
  int pixels() const { return oh * ow; }
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  TSSL_CHECK(x.rank() == 4, "conv2d input must be [N,C,H,W], got " << shape_str(x.shape()));
  TSSL_CHECK(w.rank() == 4, "conv2d weight must be [K,C,kh,kw], got " << shape_str(w.shape()));
  TSSL_CHECK(b.rank() == 1, "conv2d bias must be [K], got " << shape_str(b.shape()));
  ConvGeom g;
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.k = w.dim(0);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  g.stride = stride;
  g.pad = pad;
  TSSL_CHECK(w.dim(1) == g.cin,
             "conv2d channel mismatch: input has " << g.cin << ", weight expects " << w.dim(1));
  TSSL_CHECK(b.dim(0) == g.k, "conv2d bias extent " << b.dim(0) << " != filters " << g.k);
  TSSL_CHECK(g.kh % 2 == 1 && g.kw % 2 == 1,
             "conv2d kernel extents must be odd, got " << g.kh << "x" << g.kw);
  TSSL_CHECK(stride >= 1, "conv2d stride must be >= 1, got " << stride);
  TSSL_CHECK(pad >= 0, "conv2d pad must be >= 0, got " << pad);
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  TSSL_CHECK(g.h + 2 * pad >= g.kh && g.w + 2 * pad >= g.kw && g.oh >= 1 && g.ow >= 1,
             "conv2d output would be empty for input " << shape_str(x.shape()) << " kernel "
                                                       << g.kh << "x" << g.kw);
  return g;
}

// Patch matrix for one sample, RowMajor [Cin*kh*kw, OH*OW] stored row by row
// (each row is one (c,ki,kj) tap across all output pixels). Viewed ColMajor
// it is the transposed patch matrix, which keeps every GEMM column-major.
void im2col(const float* x, const ConvGeom& g, float* cols) {
  const int P = g.pixels();
  for (int c = 0; c < g.cin; ++c) {
    const float* xc = x + static_cast<size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        float* row = cols + (static_cast<size_t>(c) * g.kh * g.kw +
                             static_cast<size_t>(ki) * g.kw + kj) *
                                P;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          float* dst = row + static_cast<size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, 0.0f);
            continue;
          }
          const float* src = xc + static_cast<size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-accumulate of a patch-matrix gradient back onto the input plane.
void col2im_acc(const float* cols, const ConvGeom& g, float* dx) {
  const int P = g.pixels();
  for (int c = 0; c < g.cin; ++c) {
    float* xc = dx + static_cast<size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const float* row = cols + (static_cast<size_t>(c) * g.kh * g.kw +
                                   static_cast<size_t>(ki) * g.kw + kj) *
                                      P;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          const float* src = row + static_cast<size_t>(oy) * g.ow;
          float* dst = xc + static_cast<size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const ConvGeom g = conv_geometry(x, w, b, stride, pad);
  check_finite(x, "conv2d input");
  check_finite(w, "conv2d weight");
  check_finite(b, "conv2d bias");

  const int P = g.pixels();
  const int CKK = g.ckk();
  std::vector<float> out(static_cast<size_t>(g.n) * g.k * P);
  std::vector<float> cols(static_cast<size_t>(CKK) * P);
  // ColMajor views: W^T is [CKK,K], the patch matrix transpose is [P,CKK],
  // and each output sample viewed ColMajor is out^T [P,K].
  MapColConst wt(w.data().data(), CKK, g.k);
  for (int n = 0; n < g.n; ++n) {
    im2col(x.data().data() + static_cast<size_t>(n) * g.cin * g.h * g.w, g, cols.data());
    MapColConst ct(cols.data(), P, CKK);
    MapCol ot(out.data() + static_cast<size_t>(n) * g.k * P, P, g.k);
    ot.noalias() = ct * wt;
  }
  const float* bp = b.data().data();
  for (int n = 0; n < g.n; ++n) {
    for (int k = 0; k < g.k; ++k) {
      float* dst = out.data() + (static_cast<size_t>(n) * g.k + k) * P;
      const float bv = bp[k];
      for (int p = 0; p < P; ++p) dst[p] += bv;
    }
  }

  auto bwd = [g](detail::Node& self) {
    const int P = g.pixels();
    const int CKK = g.ckk();
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    auto& bn = *self.parents[2];
    const float* gy = self.grad.data();

    if (bn.requires_grad) {
      bn.ensure_grad();
      for (int n = 0; n < g.n; ++n) {
        for (int k = 0; k < g.k; ++k) {
          const float* src = gy + (static_cast<size_t>(n) * g.k + k) * P;
          float acc = 0.0f;
          for (int p = 0; p < P; ++p) acc += src[p];
          bn.grad[static_cast<size_t>(k)] += acc;
        }
      }
    }

    const bool need_dw = wn.requires_grad;
    const bool need_dx = xn.requires_grad;
    if (!need_dw && !need_dx) return;
    if (need_dw) wn.ensure_grad();
    if (need_dx) xn.ensure_grad();

    std::vector<float> cols(static_cast<size_t>(CKK) * P);
    std::vector<float> dcols(need_dx ? cols.size() : 0);
    MapColConst wt(wn.value.data(), CKK, g.k);
    for (int n = 0; n < g.n; ++n) {
      MapColConst gt(gy + static_cast<size_t>(n) * g.k * P, P, g.k);
      if (need_dw) {
        im2col(xn.value.data() + static_cast<size_t>(n) * g.cin * g.h * g.w, g, cols.data());
        MapColConst ct(cols.data(), P, CKK);
        MapCol dwt(wn.grad.data(), CKK, g.k);
        dwt.noalias() += ct.transpose() * gt;
      }
      if (need_dx) {
        MapCol dct(dcols.data(), P, CKK);
        dct.noalias() = gt * wt.transpose();
        col2im_acc(dcols.data(), g,
                   xn.grad.data() + static_cast<size_t>(n) * g.cin * g.h * g.w);
      }
    }
  };

  return detail::make_result({g.n, g.k, g.oh, g.ow}, std::move(out), {x, w, b}, std::move(bwd));
}

Tensor relu(const Tensor& x) {
  TSSL_CHECK(x.defined(), "relu on undefined tensor");
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > 0.0f ? v : 0.0f;
  auto bwd = [](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const float* gy = self.grad.data();
    const float* xv = xn.value.data();
    for (size_t i = 0; i < xn.value.size(); ++i) {
      if (xv[i] > 0.0f) xn.grad[i] += gy[i];
    }
  };
  return detail::make_result(x.shape(), std::move(out), {x}, std::move(bwd));
}

Tensor avg_pool2d(const Tensor& x, int k, int stride) {
  TSSL_CHECK(x.rank() == 4, "avg_pool2d input must be [N,C,H,W], got " << shape_str(x.shape()));
  TSSL_CHECK(k >= 1, "avg_pool2d window must be >= 1, got " << k);
  TSSL_CHECK(stride >= 1, "avg_pool2d stride must be >= 1, got " << stride);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TSSL_CHECK(H >= k && W >= k, "avg_pool2d window " << k << " does not fit input "
                                                    << shape_str(x.shape()));
  const int OH = (H - k) / stride + 1;
  const int OW = (W - k) / stride + 1;
  const float inv = 1.0f / static_cast<float>(k * k);

  std::vector<float> out(static_cast<size_t>(N) * C * OH * OW);
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = x.data().data() + static_cast<size_t>(nc) * H * W;
    float* dst = out.data() + static_cast<size_t>(nc) * OH * OW;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        float acc = 0.0f;
        for (int i = 0; i < k; ++i) {
          const float* row = src + static_cast<size_t>(oy * stride + i) * W + ox * stride;
          for (int j = 0; j < k; ++j) acc += row[j];
        }
        dst[static_cast<size_t>(oy) * OW + ox] = acc * inv;
      }
    }
  }

  auto bwd = [N, C, H, W, OH, OW, k, stride, inv](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const float* gy = self.grad.data();
    for (int nc = 0; nc < N * C; ++nc) {
      float* dx = xn.grad.data() + static_cast<size_t>(nc) * H * W;
      const float* g = gy + static_cast<size_t>(nc) * OH * OW;
      for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox) {
          const float gv = g[static_cast<size_t>(oy) * OW + ox] * inv;
          for (int i = 0; i < k; ++i) {
            float* row = dx + static_cast<size_t>(oy * stride + i) * W + ox * stride;
            for (int j = 0; j < k; ++j) row[j] += gv;
          }
        }
      }
    }
  };
  return detail::make_result({N, C, OH, OW}, std::move(out), {x}, std::move(bwd));
}

namespace {

struct LerpTap {
  int i0, i1;
  float f;  // weight of i1
};

// Align-corners source taps along one axis; out == in degenerates to the
// exact identity because f becomes 0 at integer sources.
std::vector<LerpTap> bilinear_taps(int in, int out) {
  std::vector<LerpTap> taps(static_cast<size_t>(out));
  for (int o = 0; o < out; ++o) {
    double s = (out > 1) ? static_cast<double>(o) * (in - 1) / (out - 1) : 0.0;
    int i0 = static_cast<int>(std::floor(s));
    if (i0 > in - 1) i0 = in - 1;
    int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<size_t>(o)] = {i0, i1, static_cast<float>(s - i0)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_upsample(const Tensor& x, int out_h, int out_w) {
  TSSL_CHECK(x.rank() == 4,
             "bilinear_upsample input must be [N,C,H,W], got " << shape_str(x.shape()));
  TSSL_CHECK(out_h >= 1 && out_w >= 1,
             "bilinear_upsample target size must be positive, got " << out_h << "x" << out_w);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TSSL_CHECK(H >= 1 && W >= 1, "bilinear_upsample input has empty plane");
  const auto ty = bilinear_taps(H, out_h);
  const auto tx = bilinear_taps(W, out_w);

  std::vector<float> out(static_cast<size_t>(N) * C * out_h * out_w);
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = x.data().data() + static_cast<size_t>(nc) * H * W;
    float* dst = out.data() + static_cast<size_t>(nc) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& y = ty[static_cast<size_t>(oy)];
      const float* r0 = src + static_cast<size_t>(y.i0) * W;
      const float* r1 = src + static_cast<size_t>(y.i1) * W;
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& xt = tx[static_cast<size_t>(ox)];
        const float top = r0[xt.i0] * (1.0f - xt.f) + r0[xt.i1] * xt.f;
        const float bot = r1[xt.i0] * (1.0f - xt.f) + r1[xt.i1] * xt.f;
        dst[static_cast<size_t>(oy) * out_w + ox] = top * (1.0f - y.f) + bot * y.f;
      }
    }
  }

  auto bwd = [N, C, H, W, out_h, out_w, ty, tx](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const float* gy = self.grad.data();
    for (int nc = 0; nc < N * C; ++nc) {
      float* dx = xn.grad.data() + static_cast<size_t>(nc) * H * W;
      const float* g = gy + static_cast<size_t>(nc) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& y = ty[static_cast<size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& xt = tx[static_cast<size_t>(ox)];
          const float gv = g[static_cast<size_t>(oy) * out_w + ox];
          dx[static_cast<size_t>(y.i0) * W + xt.i0] += gv * (1.0f - y.f) * (1.0f - xt.f);
          dx[static_cast<size_t>(y.i0) * W + xt.i1] += gv * (1.0f - y.f) * xt.f;
          dx[static_cast<size_t>(y.i1) * W + xt.i0] += gv * y.f * (1.0f - xt.f);
          dx[static_cast<size_t>(y.i1) * W + xt.i1] += gv * y.f * xt.f;
        }
      }
    }
  };
  return detail::make_result({N, C, out_h, out_w}, std::move(out), {x}, std::move(bwd));
}

namespace {

void check_logits_4d(const Tensor& logits) {
  TSSL_CHECK(logits.rank() == 4,
             "cross-entropy expects logits [N,C,H,W], got " << shape_str(logits.shape()));
  TSSL_CHECK(logits.dim(1) >= 1, "cross-entropy needs at least one class");
  check_finite(logits, "cross-entropy logits");
}

// Per-pixel softmax of a [N,C,H,W] buffer, channel-strided access.
void softmax_pixel(const float* logits, int C, size_t stride, float* probs) {
  float m = logits[0];
  for (int c = 1; c < C; ++c) m = std::max(m, logits[static_cast<size_t>(c) * stride]);
  float z = 0.0f;
  for (int c = 0; c < C; ++c) {
    const float e = std::exp(logits[static_cast<size_t>(c) * stride] - m);
    probs[static_cast<size_t>(c) * stride] = e;
    z += e;
  }
  const float inv = 1.0f / z;
  for (int c = 0; c < C; ++c) probs[static_cast<size_t>(c) * stride] *= inv;
}

}  // namespace

Tensor softmax_ce_hard(const Tensor& logits, const IntMask& target, int ignore_index) {
  check_logits_4d(logits);
  const int N = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  TSSL_CHECK(target.shape == Shape({N, H, W}),
             "cross-entropy target shape " << shape_str(target.shape) << " does not match logits "
                                           << shape_str(logits.shape()));
  const size_t plane = static_cast<size_t>(H) * W;
  const size_t cstride = plane;

  std::vector<float> probs(logits.data().begin(), logits.data().end());
  double loss = 0.0;
  int64_t count = 0;
  for (int n = 0; n < N; ++n) {
    float* pn = probs.data() + static_cast<size_t>(n) * C * plane;
    const int32_t* tn = target.v.data() + static_cast<size_t>(n) * plane;
    for (size_t p = 0; p < plane; ++p) {
      const int32_t t = tn[p];
      if (t == ignore_index) continue;
      TSSL_CHECK(t >= 0 && t < C, "cross-entropy label " << t << " out of range [0," << C << ")");
      softmax_pixel(pn + p, C, cstride, pn + p);
      const float pt = pn[p + static_cast<size_t>(t) * cstride];
      loss += -std::log(static_cast<double>(pt));
      ++count;
    }
  }
  // Pixels whose label == ignore_index keep raw logits in the stash; the
  // backward never reads them.
  const float value = count ? static_cast<float>(loss / static_cast<double>(count)) : 0.0f;

  auto bwd = [N, C, plane, cstride, target, ignore_index, count,
              probs = std::move(probs)](detail::Node& self) {
    auto& ln = *self.parents[0];
    if (!ln.requires_grad || count == 0) return;
    ln.ensure_grad();
    const float g = self.grad[0] / static_cast<float>(count);
    for (int n = 0; n < N; ++n) {
      const float* pn = probs.data() + static_cast<size_t>(n) * C * plane;
      float* dn = ln.grad.data() + static_cast<size_t>(n) * C * plane;
      const int32_t* tn = target.v.data() + static_cast<size_t>(n) * plane;
      for (size_t p = 0; p < plane; ++p) {
        const int32_t t = tn[p];
        if (t == ignore_index) continue;
        for (int c = 0; c < C; ++c) {
          const size_t idx = p + static_cast<size_t>(c) * cstride;
          const float onehot = (c == t) ? 1.0f : 0.0f;
          dn[idx] += (pn[idx] - onehot) * g;
        }
      }
    }
  };
  return detail::make_result({}, {value}, {logits}, std::move(bwd));
}

Tensor softmax_ce_soft(const Tensor& logits, const Tensor& target_probs, const BoolMask& valid) {
  check_logits_4d(logits);
  TSSL_CHECK(target_probs.defined() && !target_probs.requires_grad(),
             "cross-entropy target distribution must be detached from the graph");
  TSSL_CHECK(same_shape(target_probs.shape(), logits.shape()),
             "cross-entropy target shape " << shape_str(target_probs.shape())
                                           << " does not match logits "
                                           << shape_str(logits.shape()));
  const int N = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  TSSL_CHECK(valid.shape == Shape({N, H, W}),
             "validity mask shape " << shape_str(valid.shape) << " does not match logits "
                                    << shape_str(logits.shape()));
  check_finite(target_probs, "cross-entropy target distribution");
  const size_t plane = static_cast<size_t>(H) * W;
  const size_t cstride = plane;

  std::vector<float> probs(logits.data().begin(), logits.data().end());
  const float* tp = target_probs.data().data();
  double loss = 0.0;
  int64_t count = 0;
  for (int n = 0; n < N; ++n) {
    float* pn = probs.data() + static_cast<size_t>(n) * C * plane;
    const float* tn = tp + static_cast<size_t>(n) * C * plane;
    const uint8_t* vn = valid.v.data() + static_cast<size_t>(n) * plane;
    for (size_t p = 0; p < plane; ++p) {
      if (!vn[p]) continue;
      double tsum = 0.0;
      for (int c = 0; c < C; ++c) {
        const float tv = tn[p + static_cast<size_t>(c) * cstride];
        TSSL_CHECK(tv >= 0.0f, "target distribution has a negative entry");
        tsum += tv;
      }
      TSSL_CHECK(std::abs(tsum - 1.0) <= 1e-4,
                 "target distribution sums to " << tsum << " at a valid pixel");
      softmax_pixel(pn + p, C, cstride, pn + p);
      double px = 0.0;
      for (int c = 0; c < C; ++c) {
        const size_t idx = p + static_cast<size_t>(c) * cstride;
        px += -static_cast<double>(tn[idx]) * std::log(static_cast<double>(pn[idx]));
      }
      loss += px;
      ++count;
    }
  }
  const float value = count ? static_cast<float>(loss / static_cast<double>(count)) : 0.0f;

  auto bwd = [N, C, plane, cstride, valid, target_probs, count,
              probs = std::move(probs)](detail::Node& self) {
    auto& ln = *self.parents[0];
    if (!ln.requires_grad || count == 0) return;
    ln.ensure_grad();
    const float g = self.grad[0] / static_cast<float>(count);
    const float* tp = target_probs.data().data();
    for (int n = 0; n < N; ++n) {
      const float* pn = probs.data() + static_cast<size_t>(n) * C * plane;
      const float* tn = tp + static_cast<size_t>(n) * C * plane;
      float* dn = ln.grad.data() + static_cast<size_t>(n) * C * plane;
      const uint8_t* vn = valid.v.data() + static_cast<size_t>(n) * plane;
      for (size_t p = 0; p < plane; ++p) {
        if (!vn[p]) continue;
        for (int c = 0; c < C; ++c) {
          const size_t idx = p + static_cast<size_t>(c) * cstride;
          dn[idx] += (pn[idx] - tn[idx]) * g;
        }
      }
    }
  };
  return detail::make_result({}, {value}, {logits}, std::move(bwd));
}

Tensor add(const Tensor& a, const Tensor& b) {
  TSSL_CHECK(a.defined() && b.defined(), "add on undefined tensor");
  TSSL_CHECK(same_shape(a.shape(), b.shape()),
             "add shape mismatch: " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
  std::vector<float> out(a.data().begin(), a.data().end());
  const float* bp = b.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bp[i];
  auto bwd = [](detail::Node& self) {
    for (auto& pn : self.parents) detail::accumulate(*pn, self.grad);
  };
  return detail::make_result(a.shape(), std::move(out), {a, b}, std::move(bwd));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  TSSL_CHECK(a.defined() && b.defined(), "mul on undefined tensor");
  TSSL_CHECK(same_shape(a.shape(), b.shape()),
             "mul shape mismatch: " << shape_str(a.shape()) << " vs " << shape_str(b.shape()));
  std::vector<float> out(a.data().begin(), a.data().end());
  const float* bp = b.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bp[i];
  auto bwd = [](detail::Node& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    const float* gy = self.grad.data();
    if (an.requires_grad) {
      an.ensure_grad();
      for (size_t i = 0; i < an.grad.size(); ++i) an.grad[i] += gy[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      for (size_t i = 0; i < bn.grad.size(); ++i) bn.grad[i] += gy[i] * an.value[i];
    }
  };
  return detail::make_result(a.shape(), std::move(out), {a, b}, std::move(bwd));
}

Tensor scale(const Tensor& a, float s) {
  TSSL_CHECK(a.defined(), "scale on undefined tensor");
  std::vector<float> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  auto bwd = [s](detail::Node& self) {
    auto& an = *self.parents[0];
    if (!an.requires_grad) return;
    an.ensure_grad();
    const float* gy = self.grad.data();
    for (size_t i = 0; i < an.grad.size(); ++i) an.grad[i] += gy[i] * s;
  };
  return detail::make_result(a.shape(), std::move(out), {a}, std::move(bwd));
}

Tensor sum(const Tensor& x) {
  TSSL_CHECK(x.defined(), "sum on undefined tensor");
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  auto bwd = [](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    const float g = self.grad[0];
    for (auto& v : xn.grad) v += g;
  };
  return detail::make_result({}, {static_cast<float>(acc)}, {x}, std::move(bwd));
}

Tensor slice_batch(const Tensor& x, int n) {
  TSSL_CHECK(x.rank() >= 1, "slice_batch needs a batched tensor");
  const int N = x.dim(0);
  TSSL_CHECK(n >= 0 && n < N, "slice_batch index " << n << " out of range [0," << N << ")");
  Shape out_shape = x.shape();
  out_shape[0] = 1;
  const size_t stride = static_cast<size_t>(x.numel() / N);
  std::vector<float> out(x.data().begin() + static_cast<ptrdiff_t>(stride) * n,
                         x.data().begin() + static_cast<ptrdiff_t>(stride) * (n + 1));
  auto bwd = [n, stride](detail::Node& self) {
    auto& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad();
    float* dst = xn.grad.data() + stride * static_cast<size_t>(n);
    for (size_t i = 0; i < stride; ++i) dst[i] += self.grad[i];
  };
  return detail::make_result(std::move(out_shape), std::move(out), {x}, std::move(bwd));
}

Tensor softmax_channels(const Tensor& logits) {
  check_logits_4d(logits);
  const int N = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  const size_t plane = static_cast<size_t>(H) * W;
  std::vector<float> probs(logits.data().begin(), logits.data().end());
  for (int n = 0; n < N; ++n) {
    float* pn = probs.data() + static_cast<size_t>(n) * C * plane;
    for (size_t p = 0; p < plane; ++p) softmax_pixel(pn + p, C, plane, pn + p);
  }
  return Tensor::from_data(logits.shape(), std::move(probs), false);
}

IntMask argmax_channels(const Tensor& scores) {
  TSSL_CHECK(scores.rank() == 3 || scores.rank() == 4,
             "argmax_channels expects [C,H,W] or [N,C,H,W], got " << shape_str(scores.shape()));
  const bool batched = scores.rank() == 4;
  const int N = batched ? scores.dim(0) : 1;
  const int C = scores.dim(batched ? 1 : 0);
  const int H = scores.dim(batched ? 2 : 1);
  const int W = scores.dim(batched ? 3 : 2);
  TSSL_CHECK(C >= 1, "argmax_channels needs at least one channel");
  const size_t plane = static_cast<size_t>(H) * W;

  IntMask out;
  out.shape = batched ? Shape{N, H, W} : Shape{H, W};
  out.v.resize(static_cast<size_t>(N) * plane);
  const float* s = scores.data().data();
  for (int n = 0; n < N; ++n) {
    const float* sn = s + static_cast<size_t>(n) * C * plane;
    int32_t* on = out.v.data() + static_cast<size_t>(n) * plane;
    for (size_t p = 0; p < plane; ++p) {
      int best = 0;
      float bv = sn[p];
      for (int c = 1; c < C; ++c) {
        const float v = sn[p + static_cast<size_t>(c) * plane];
        if (v > bv) {  // strict: ties keep the lowest class index
          bv = v;
          best = c;
        }
      }
      on[p] = best;
    }
  }
  return out;
}

}  // namespace tssl::engine
