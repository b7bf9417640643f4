#include <cmath>
#include <cstring>
#include <optional>
#include <span>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "partition_suite.hpp"
#include "tssl/loss.hpp"

using tssl::augment::AugmentSpec;
using tssl::engine::IntMask;
using tssl::engine::Tensor;
using tssl::loss::Item;
using tssl::loss::Options;
using tssl::loss::StageBatch;
using tssl::loss::stage_loss;
using tssl::loss::Terms;
using tssl::net::AuxKind;
using tssl::net::MultiTaskNet;
using tssl::net::NetConfig;

namespace {

constexpr int kS = 12;  // image side used throughout this suite

NetConfig tiny_cfg() {
  NetConfig cfg;
  cfg.in_channels = 3;
  cfg.num_classes = 4;
  cfg.trunk = {{6, 3, 2}, {8, 3, 1}, {8, 3, 1}};
  return cfg;
}

Tensor rand_image(tssl::Rng& rng) {
  std::vector<float> buf(3 * kS * kS);
  for (auto& v : buf) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return Tensor::from_data({3, kS, kS}, std::move(buf), false);
}

IntMask rand_mask(tssl::Rng& rng, int num_classes, double ignore_p = 0.0) {
  IntMask m;
  m.shape = {kS, kS};
  m.v.resize(kS * kS);
  for (auto& v : m.v) {
    v = rng.bernoulli(ignore_p) ? 255
                                : static_cast<int32_t>(rng.uniform_int(
                                      static_cast<uint64_t>(num_classes)));
  }
  return m;
}

Item make_item(tssl::Rng& rng, bool with_gt, bool with_pseudo, AugmentSpec spec) {
  Item it;
  it.image = rand_image(rng);
  if (with_gt) it.gt = rand_mask(rng, 4);
  if (with_pseudo) it.pseudo = rand_mask(rng, 4, 0.1);
  it.spec = spec;
  return it;
}

Options base_opts(int stage) {
  Options o;
  o.stage = stage;
  o.fill = {0.5f, 0.5f, 0.5f};
  return o;
}

// Double-precision per-pixel cross-entropy against the engine's own logits.
double ce_hard_ref(const Tensor& logits, const IntMask& target, int ignore) {
  const int C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  const auto d = logits.data();
  const size_t plane = static_cast<size_t>(H) * W;
  double sum = 0.0;
  int64_t n = 0;
  for (size_t p = 0; p < plane; ++p) {
    const int32_t t = target.v[p];
    if (t == ignore) continue;
    double mx = -1e300;
    for (int c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(d[c * plane + p]));
    double lse = 0.0;
    for (int c = 0; c < C; ++c) lse += std::exp(static_cast<double>(d[c * plane + p]) - mx);
    lse = mx + std::log(lse);
    sum += lse - static_cast<double>(d[static_cast<size_t>(t) * plane + p]);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double ce_soft_ref(const Tensor& logits, std::span<const float> target,
                   const std::vector<uint8_t>& valid) {
  const int C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  const auto d = logits.data();
  const size_t plane = static_cast<size_t>(H) * W;
  double sum = 0.0;
  int64_t n = 0;
  for (size_t p = 0; p < plane; ++p) {
    if (!valid[p]) continue;
    double mx = -1e300;
    for (int c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(d[c * plane + p]));
    double lse = 0.0;
    for (int c = 0; c < C; ++c) lse += std::exp(static_cast<double>(d[c * plane + p]) - mx);
    lse = mx + std::log(lse);
    double pixel = 0.0;
    for (int c = 0; c < C; ++c) {
      pixel += static_cast<double>(target[c * plane + p]) *
               (lse - static_cast<double>(d[c * plane + p]));
    }
    sum += pixel;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

Tensor as_batch(const Tensor& chw) {
  return Tensor::from_data({1, chw.dim(0), chw.dim(1), chw.dim(2)},
                           std::vector<float>(chw.data().begin(), chw.data().end()), false);
}

AugmentSpec shifted_flip_spec() {
  AugmentSpec s;
  s.flip = true;
  s.dx = 2;
  s.dy = -1;
  return s;
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("the first stage trains on the supervised term alone") {
  tssl::Rng rng(31);
  const MultiTaskNet net(tiny_cfg(), AuxKind::none, 5);
  StageBatch batch;
  batch.sub2.push_back(make_item(rng, true, false, tssl::augment::identity_spec()));
  batch.sub2.push_back(make_item(rng, true, false, tssl::augment::identity_spec()));

  const Terms t = stage_loss(net, batch, base_opts(1));
  CHECK(t.con == 0.0);
  CHECK(t.pl == 0.0);
  CHECK(t.total.item() == doctest::Approx(t.seg).epsilon(1e-7));
  CHECK(t.seg > 0.0);

  // Matches per-item cross-entropy on the clean images.
  double want = 0.0;
  for (const auto& it : batch.sub2) {
    want += ce_hard_ref(net.forward(as_batch(it.image)), *it.gt, 255);
  }
  want /= 2.0;
  CHECK(t.seg == doctest::Approx(want).epsilon(1e-5));

  const Tensor sup = tssl::loss::supervised_loss(net, batch.sub2, 255);
  CHECK(sup.item() == doctest::Approx(t.seg).epsilon(1e-7));
}

TEST_CASE("batch and option validation") {
  tssl::Rng rng(32);
  const MultiTaskNet net(tiny_cfg(), AuxKind::none, 5);
  const MultiTaskNet aux_net(tiny_cfg(), AuxKind::stage2, 5);

  StageBatch batch;
  batch.sub2.push_back(make_item(rng, true, false, tssl::augment::identity_spec()));

  Options bad = base_opts(0);
  CHECK_THROWS_AS(stage_loss(net, batch, bad), tssl::Error);
  bad = base_opts(1);
  bad.weights.lambda1 = -0.5f;
  CHECK_THROWS_AS(stage_loss(net, batch, bad), tssl::Error);
  bad = base_opts(1);
  bad.fill = {0.5f};
  CHECK_THROWS_AS(stage_loss(net, batch, bad), tssl::Error);

  StageBatch with_sub1 = batch;
  with_sub1.sub1.push_back(make_item(rng, false, true, shifted_flip_spec()));
  CHECK_THROWS_AS(stage_loss(net, with_sub1, base_opts(1)), tssl::Error);

  StageBatch empty;
  CHECK_THROWS_AS(stage_loss(net, empty, base_opts(1)), tssl::Error);
  CHECK_THROWS_AS(stage_loss(net, empty, base_opts(2)), tssl::Error);

  StageBatch crooked;
  crooked.sub2.push_back(make_item(rng, true, false, shifted_flip_spec()));
  CHECK_THROWS_AS(stage_loss(net, crooked, base_opts(1)), tssl::Error);

  StageBatch unlabelled;
  unlabelled.sub2.push_back(make_item(rng, false, false, tssl::augment::identity_spec()));
  CHECK_THROWS_AS(stage_loss(net, unlabelled, base_opts(1)), tssl::Error);

  // The auxiliary objective needs an auxiliary branch and pseudo-masks.
  try {
    stage_loss(net, batch, base_opts(2));
    FAIL("expected a sequencing error");
  } catch (const tssl::Error& e) {
    CHECK(e.code() == "sequencing");
  }
  StageBatch no_pseudo;
  no_pseudo.sub1.push_back(make_item(rng, false, false, shifted_flip_spec()));
  try {
    stage_loss(aux_net, no_pseudo, base_opts(2));
    FAIL("expected a sequencing error");
  } catch (const tssl::Error& e) {
    CHECK(e.code() == "sequencing");
  }
}

TEST_CASE("zero weights and switched-off terms skip identically") {
  tssl::Rng rng(33);
  const MultiTaskNet net(tiny_cfg(), AuxKind::stage2, 5);
  StageBatch batch;
  batch.sub1.push_back(make_item(rng, false, true, shifted_flip_spec()));
  batch.sub2.push_back(make_item(rng, true, true, tssl::augment::identity_spec()));

  Options zeroed = base_opts(2);
  zeroed.weights.lambda1 = 0.0f;
  zeroed.weights.lambda2 = 0.0f;
  const Terms a = stage_loss(net, batch, zeroed);

  Options off = base_opts(2);
  off.consistency = false;
  off.aux_task = false;
  const Terms b = stage_loss(net, batch, off);

  CHECK(a.con == 0.0);
  CHECK(a.pl == 0.0);
  CHECK(a.total.item() == b.total.item());  // bit-identical skip
  CHECK(a.seg == b.seg);

  // And the survivor is exactly the supervised term.
  CHECK(a.total.item() == doctest::Approx(a.seg).epsilon(1e-7));
}

TEST_CASE("soft consistency matches a double-precision recomputation") {
  tssl::Rng rng(34);
  const MultiTaskNet net(tiny_cfg(), AuxKind::none, 9);

  AugmentSpec specs[2] = {shifted_flip_spec(), {}};
  specs[1].scale = 0.85f;
  specs[1].cutout = {true, 2, 3, 6, 8};
  for (const AugmentSpec& spec : specs) {
    StageBatch batch;
    batch.sub1.push_back(make_item(rng, false, false, spec));
    Options opts = base_opts(2);
    opts.aux_task = false;
    opts.soft_target = true;
    const Terms t = stage_loss(net, batch, opts);
    CHECK(t.seg == 0.0);

    const auto& item = batch.sub1.front();
    const Tensor x_aug = tssl::augment::apply_image(spec, item.image, opts.fill);
    const Tensor logits = net.forward(as_batch(x_aug));
    const Tensor teacher = net.forward_teacher(as_batch(item.image));
    const Tensor t_chw = Tensor::from_data(
        {4, kS, kS}, std::vector<float>(teacher.data().begin(), teacher.data().end()), false);
    const auto moved = tssl::augment::apply_dense(spec, t_chw);
    const double want = ce_soft_ref(logits, moved.probs.data(), moved.valid.v);
    CHECK(t.con == doctest::Approx(want).epsilon(2e-5));
    CHECK(t.total.item() ==
          doctest::Approx(opts.weights.lambda1 * t.con).epsilon(1e-6));
  }
}

TEST_CASE("hard consistency targets the transported teacher argmax") {
  tssl::Rng rng(35);
  const MultiTaskNet net(tiny_cfg(), AuxKind::none, 10);
  const AugmentSpec spec = shifted_flip_spec();
  StageBatch batch;
  batch.sub1.push_back(make_item(rng, false, false, spec));
  Options opts = base_opts(2);
  opts.aux_task = false;
  opts.soft_target = false;
  const Terms t = stage_loss(net, batch, opts);

  const auto& item = batch.sub1.front();
  const Tensor x_aug = tssl::augment::apply_image(spec, item.image, opts.fill);
  const Tensor logits = net.forward(as_batch(x_aug));
  const Tensor teacher = net.forward_teacher(as_batch(item.image));
  const Tensor t_chw = Tensor::from_data(
      {4, kS, kS}, std::vector<float>(teacher.data().begin(), teacher.data().end()), false);
  const IntMask hard = tssl::engine::argmax_channels(t_chw);
  const IntMask moved = tssl::augment::apply_mask(spec, hard, 255);
  CHECK(t.con == doctest::Approx(ce_hard_ref(logits, moved, 255)).epsilon(2e-5));
}

TEST_CASE("the auxiliary term scores transported pseudo-masks") {
  tssl::Rng rng(36);
  const MultiTaskNet net(tiny_cfg(), AuxKind::stage2, 11);
  const AugmentSpec spec = shifted_flip_spec();
  StageBatch batch;
  batch.sub1.push_back(make_item(rng, false, true, spec));
  Options opts = base_opts(2);
  opts.consistency = false;
  const Terms t = stage_loss(net, batch, opts);
  CHECK(t.con == 0.0);
  CHECK(t.pl > 0.0);

  const auto& item = batch.sub1.front();
  const Tensor x_aug = tssl::augment::apply_image(spec, item.image, opts.fill);
  const auto [f_logits, a_logits] = net.forward_with_aux(as_batch(x_aug));
  const IntMask moved = tssl::augment::apply_mask(spec, *item.pseudo, 255);
  CHECK(t.pl == doctest::Approx(ce_hard_ref(a_logits, moved, 255)).epsilon(2e-5));
  CHECK(t.total.item() ==
        doctest::Approx(opts.weights.lambda2 * t.pl).epsilon(1e-6));
}

TEST_CASE("the full objective is the weighted sum of its three terms") {
  tssl::Rng rng(37);
  for (AuxKind kind : {AuxKind::stage2, AuxKind::stage3}) {
    const MultiTaskNet net(tiny_cfg(), kind, 12);
    StageBatch batch;
    batch.sub1.push_back(make_item(rng, false, true, shifted_flip_spec()));
    batch.sub1.push_back(make_item(rng, false, true, tssl::augment::identity_spec()));
    batch.sub2.push_back(make_item(rng, true, true, tssl::augment::identity_spec()));
    Options opts = base_opts(kind == AuxKind::stage2 ? 2 : 3);
    opts.weights.lambda1 = 0.25f;
    opts.weights.lambda2 = 0.75f;
    const Terms t = stage_loss(net, batch, opts);
    CHECK(t.seg > 0.0);
    CHECK(t.con > 0.0);
    CHECK(t.pl > 0.0);
    const double want = t.seg + 0.25 * t.con + 0.75 * t.pl;
    CHECK(t.total.item() == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("gradients stay inside each term's branch") {
  tssl::Rng rng(38);
  MultiTaskNet net(tiny_cfg(), AuxKind::stage2, 13);

  auto grads_after = [&](const StageBatch& batch, const Options& opts) {
    auto all = net.all_params();
    // Drop buffers entirely so has_grad() tells us which leaves the sweep
    // actually reached, not which ones were pre-zeroed.
    for (auto& e : all) e.tensor.clear_grad();
    Terms t = stage_loss(net, batch, opts);
    tssl::engine::backward(t.total);
  };
  const auto has = [&](const char* name) {
    return net.trainable_params().find(name)->has_grad();
  };

  // Supervised only: the student learns, the auxiliary branch and teacher
  // stay untouched.
  {
    StageBatch batch;
    batch.sub2.push_back(make_item(rng, true, true, tssl::augment::identity_spec()));
    Options opts = base_opts(2);
    opts.consistency = false;
    opts.aux_task = false;
    grads_after(batch, opts);
    CHECK(has("f.conv1.weight"));
    CHECK(has("f.conv3.weight"));
    CHECK(has("f.head.weight"));
    CHECK_FALSE(has("aux.conv3.weight"));
    CHECK_FALSE(has("aux.head.weight"));
    for (const auto& e : net.teacher_params()) CHECK_FALSE(e.tensor.has_grad());
  }

  // Auxiliary only: gradients reach the shared trunk and the aux tail, but
  // not the student's own last block or classifier.
  {
    StageBatch batch;
    batch.sub1.push_back(make_item(rng, false, true, shifted_flip_spec()));
    Options opts = base_opts(2);
    opts.consistency = false;
    grads_after(batch, opts);
    CHECK(has("f.conv1.weight"));
    CHECK(has("f.conv2.weight"));
    CHECK_FALSE(has("f.conv3.weight"));
    CHECK_FALSE(has("f.head.weight"));
    CHECK(has("aux.conv3.weight"));
    CHECK(has("aux.head.weight"));
    for (const auto& e : net.teacher_params()) CHECK_FALSE(e.tensor.has_grad());
  }

  // Consistency only: pure student path.
  {
    StageBatch batch;
    batch.sub1.push_back(make_item(rng, false, true, shifted_flip_spec()));
    Options opts = base_opts(2);
    opts.aux_task = false;
    grads_after(batch, opts);
    CHECK(has("f.conv1.weight"));
    CHECK(has("f.conv3.weight"));
    CHECK(has("f.head.weight"));
    CHECK_FALSE(has("aux.conv3.weight"));
    CHECK_FALSE(has("aux.head.weight"));
    for (const auto& e : net.teacher_params()) CHECK_FALSE(e.tensor.has_grad());
  }

  // Late-sharing branch: the aux term now reaches every trunk block.
  {
    MultiTaskNet late(tiny_cfg(), AuxKind::stage3, 13);
    StageBatch batch;
    batch.sub1.push_back(make_item(rng, false, true, shifted_flip_spec()));
    Options opts = base_opts(3);
    opts.consistency = false;
    auto all = late.all_params();
    for (auto& e : all) e.tensor.clear_grad();
    tssl::engine::backward(stage_loss(late, batch, opts).total);
    CHECK(late.trainable_params().find("f.conv3.weight")->has_grad());
    CHECK_FALSE(late.trainable_params().find("f.head.weight")->has_grad());
    CHECK(late.trainable_params().find("aux.head.weight")->has_grad());
  }
}

TEST_CASE("finite differences confirm the partition") {
  const auto res = partsuite::run_partition_suite(2024);
  INFO(res.detail);
  CHECK(res.ok);
  CHECK(res.zero_probes >= 60);
  CHECK(res.live_probes >= 1);
  CHECK(res.worst_zero == 0.0);
}

}  // TEST_SUITE
