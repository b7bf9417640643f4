#pragma once

#include "tssl/engine/tensor.hpp"

namespace tssl::engine {

// All image tensors are NCHW, f32. Every op validates shapes/values up front
// and installs a fused backward closure with a hand-derived gradient.

// 2-D convolution: x [N,Cin,H,W], w [K,Cin,kh,kw] (odd kernels), b [K].
// Output [N,K,H',W'] with H' = (H + 2*pad - kh)/stride + 1. Rejects
// non-finite inputs and geometries with empty output.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

Tensor relu(const Tensor& x);

// Mean pooling with a k x k window; the window must fit inside the input.
Tensor avg_pool2d(const Tensor& x, int k, int stride);

// Bilinear resize with align-corners geometry: out == in is the identity.
Tensor bilinear_upsample(const Tensor& x, int out_h, int out_w);

// Softmax + cross-entropy against integer labels, mean over pixels whose
// label != ignore_index. No valid pixels => zero loss and zero gradient.
Tensor softmax_ce_hard(const Tensor& logits, const IntMask& target, int ignore_index);

// Softmax + cross-entropy against a dense distribution (constant wrt the
// graph; must not require grad). Pixels with valid == 0 are excluded; valid
// target pixels must be non-negative and sum to 1 within 1e-4.
Tensor softmax_ce_soft(const Tensor& logits, const Tensor& target_probs, const BoolMask& valid);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor sum(const Tensor& x);

// View-copy of sample n from a batched [N,...] tensor, keeping the leading
// axis with extent 1. Backward scatters into the slice.
Tensor slice_batch(const Tensor& x, int n);

// Graph-free helpers (always return constants / plain masks).
Tensor softmax_channels(const Tensor& logits);  // [N,C,H,W] -> probabilities
// Channel argmax with ties resolved to the lowest class index.
IntMask argmax_channels(const Tensor& scores);  // [N,C,H,W]->[N,H,W], [C,H,W]->[H,W]

}  // namespace tssl::engine
