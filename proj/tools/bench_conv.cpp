// Micro-benchmark for the convolution path: forward and backward over the
// default desk-scale architecture shapes. Prints step-equivalent timings.
#include <chrono>
#include <cstdio>

#include "tssl/engine/ops.hpp"
#include "tssl/engine/optim.hpp"

using namespace tssl;
using namespace tssl::engine;

namespace {

Tensor randn(Shape shape, Rng& rng, float std_dev, bool rg) {
  std::vector<float> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<float>(rng.normal()) * std_dev;
  return Tensor::from_data(std::move(shape), std::move(v), rg);
}

}  // namespace

int main() {
  Rng rng(7);
  const int N = 8;
  // Trunk: 3->16 s2, 16->32, 32->32, 32->64, 64->64, head 64->4 1x1.
  struct L {
    int cin, cout, k, stride, h;
  };
  const L layers[] = {
      {3, 16, 3, 2, 64}, {16, 32, 3, 1, 32}, {32, 32, 3, 1, 32},
      {32, 64, 3, 1, 32}, {64, 64, 3, 1, 32}, {64, 4, 1, 1, 32},
  };

  std::vector<Tensor> ws, bs;
  for (const auto& l : layers) {
    ws.push_back(randn({l.cout, l.cin, l.k, l.k}, rng, 0.05f, true));
    bs.push_back(Tensor::zeros({l.cout}, true));
  }

  auto run_step = [&]() {
    Tensor x = randn({N, 3, 64, 64}, rng, 1.0f, false);
    Tensor h = x;
    for (size_t i = 0; i < std::size(layers); ++i) {
      h = conv2d(h, ws[i], bs[i], layers[i].stride, layers[i].k / 2);
      if (i + 1 < std::size(layers)) h = relu(h);
    }
    h = bilinear_upsample(h, 64, 64);
    IntMask target;
    target.shape = {N, 64, 64};
    target.v.resize(static_cast<size_t>(N) * 64 * 64);
    for (auto& t : target.v) t = static_cast<int32_t>(rng.uniform_int(4));
    Tensor loss = softmax_ce_hard(h, target, 255);
    for (auto& w : ws) w.zero_grad();
    for (auto& b : bs) b.zero_grad();
    backward(loss);
    return loss.item();
  };

  run_step();  // warm-up
  const int iters = 20;
  auto t0 = std::chrono::steady_clock::now();
  float sink = 0.0f;
  for (int i = 0; i < iters; ++i) sink += run_step();
  auto t1 = std::chrono::steady_clock::now();
  const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
  std::printf("fwd+bwd batch %d: %.2f ms/step (sink %.3f)\n", N, ms, sink);

  // Forward-only (teacher-style) pass.
  auto t2 = std::chrono::steady_clock::now();
  {
    NoGradGuard ng;
    for (int i = 0; i < iters; ++i) {
      Tensor x = randn({N, 3, 64, 64}, rng, 1.0f, false);
      Tensor h = x;
      for (size_t j = 0; j < std::size(layers); ++j) {
        h = conv2d(h, ws[j], bs[j], layers[j].stride, layers[j].k / 2);
        if (j + 1 < std::size(layers)) h = relu(h);
      }
      h = bilinear_upsample(h, 64, 64);
      sink += h.data()[0];
    }
  }
  auto t3 = std::chrono::steady_clock::now();
  const double fms = std::chrono::duration<double, std::milli>(t3 - t2).count() / iters;
  std::printf("fwd-only batch %d: %.2f ms/step (sink %.3f)\n", N, fms, sink);
  return 0;
}
