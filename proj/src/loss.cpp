#include "tssl/loss.hpp"

namespace tssl::loss {

namespace {

using engine::Tensor;

// Stack per-item images (transported through their specs when `augmented`)
// into one [N,C,H,W] batch.
Tensor assemble_batch(const std::vector<const Item*>& items, bool augmented,
                      std::span<const float> fill) {
  const auto& first = items.front()->image;
  const int C = first.dim(0), H = first.dim(1), W = first.dim(2);
  const size_t sample = static_cast<size_t>(C) * H * W;
  std::vector<float> buf(items.size() * sample);
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& img = items[i]->image;
    TSSL_CHECK(img.dim(0) == C && img.dim(1) == H && img.dim(2) == W,
               "batch images must share one shape");
    if (augmented && !items[i]->spec.identity()) {
      const Tensor t = augment::apply_image(items[i]->spec, img, fill);
      std::copy(t.data().begin(), t.data().end(), buf.begin() + static_cast<ptrdiff_t>(i * sample));
    } else {
      std::copy(img.data().begin(), img.data().end(),
                buf.begin() + static_cast<ptrdiff_t>(i * sample));
    }
  }
  return Tensor::from_data({static_cast<int>(items.size()), C, H, W}, std::move(buf), false);
}

engine::IntMask with_batch_axis(const engine::IntMask& m) {
  engine::IntMask out;
  out.shape = {1, m.shape[0], m.shape[1]};
  out.v = m.v;
  return out;
}

engine::BoolMask with_batch_axis(const engine::BoolMask& m) {
  engine::BoolMask out;
  out.shape = {1, m.shape[0], m.shape[1]};
  out.v = m.v;
  return out;
}

// [C,H,W] constant copy of sample n of a [N,C,H,W] tensor.
Tensor slice_constant(const Tensor& batch, int n) {
  const int C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
  const size_t sample = static_cast<size_t>(C) * H * W;
  std::vector<float> buf(batch.data().begin() + static_cast<ptrdiff_t>(sample * n),
                         batch.data().begin() + static_cast<ptrdiff_t>(sample * (n + 1)));
  return Tensor::from_data({C, H, W}, std::move(buf), false);
}

Tensor mean_of(std::vector<Tensor> parts) {
  Tensor acc = parts.front();
  for (size_t i = 1; i < parts.size(); ++i) acc = engine::add(acc, parts[i]);
  return engine::scale(acc, 1.0f / static_cast<float>(parts.size()));
}

}  // namespace

engine::Tensor supervised_loss(const net::MultiTaskNet& net, const std::vector<Item>& sub2,
                               int ignore_index) {
  StageBatch batch;
  batch.sub2 = sub2;
  Options opts;
  opts.stage = 1;
  opts.ignore_index = ignore_index;
  opts.fill.assign(static_cast<size_t>(net.config().in_channels), 0.5f);
  return stage_loss(net, batch, opts).total;
}

Terms stage_loss(const net::MultiTaskNet& net, const StageBatch& batch, const Options& opts) {
  TSSL_CHECK(opts.stage >= 1 && opts.stage <= 3, "stage must be 1, 2 or 3, got " << opts.stage);
  TSSL_CHECK(opts.weights.lambda1 >= 0.0f && opts.weights.lambda2 >= 0.0f,
             "loss weights must be non-negative");
  const bool use_con = opts.stage >= 2 && opts.consistency && opts.weights.lambda1 > 0.0f;
  const bool use_aux = opts.stage >= 2 && opts.aux_task && opts.weights.lambda2 > 0.0f;
  if (opts.stage == 1) {
    TSSL_CHECK(batch.sub1.empty(), "the first stage trains on labelled data only");
    TSSL_CHECK(!batch.sub2.empty(), "the first stage needs a non-empty labelled sub-batch");
  } else {
    TSSL_CHECK(!batch.sub1.empty() || !batch.sub2.empty(), "empty batch");
  }
  if (use_aux) {
    TSSL_CHECK_CODE(net.aux_kind() != net::AuxKind::none, "sequencing",
                    "stage " << opts.stage
                             << " trains the auxiliary objective but the net has no auxiliary "
                                "branch");
  }

  std::vector<const Item*> items;
  items.reserve(batch.sub1.size() + batch.sub2.size());
  for (const auto& it : batch.sub1) items.push_back(&it);
  for (const auto& it : batch.sub2) items.push_back(&it);
  const int ns = static_cast<int>(items.size());
  const int sub2_begin = static_cast<int>(batch.sub1.size());
  const int C = items.front()->image.dim(0);
  TSSL_CHECK(opts.fill.size() == static_cast<size_t>(C),
             "options.fill must provide " << C << " channel values, got " << opts.fill.size());
  for (const auto& it : batch.sub2) {
    TSSL_CHECK(it.spec.identity(), "sub-batch 2 must carry the identity augmentation");
    TSSL_CHECK(it.gt.has_value(), "sub-batch 2 items need ground truth");
  }

  // One trunk pass serves every term: the student input is the augmented
  // view (sub-batch 2 specs are the identity, so its slices are the clean
  // views the supervised term wants).
  const Tensor x_student = assemble_batch(items, true, opts.fill);
  Tensor f_logits;
  Tensor aux_logits;
  if (use_aux) {
    std::tie(f_logits, aux_logits) = net.forward_with_aux(x_student);
  } else {
    f_logits = net.forward(x_student);
  }

  Terms terms;
  std::vector<Tensor> parts;

  // Supervised term over sub-batch 2.
  Tensor seg;
  if (!batch.sub2.empty()) {
    parts.clear();
    for (size_t j = 0; j < batch.sub2.size(); ++j) {
      const int pos = sub2_begin + static_cast<int>(j);
      parts.push_back(engine::softmax_ce_hard(engine::slice_batch(f_logits, pos),
                                              with_batch_axis(*batch.sub2[j].gt),
                                              opts.ignore_index));
    }
    seg = mean_of(std::move(parts));
  } else {
    seg = Tensor::zeros({});
  }
  terms.seg = seg.item();
  Tensor total = seg;

  if (use_con) {
    const Tensor x_clean = assemble_batch(items, false, opts.fill);
    const Tensor teacher_probs = net.forward_teacher(x_clean);
    parts.clear();
    for (int i = 0; i < ns; ++i) {
      const Tensor t_i = slice_constant(teacher_probs, i);
      const Tensor s_i = engine::slice_batch(f_logits, i);
      if (opts.soft_target) {
        auto moved = augment::apply_dense(items[static_cast<size_t>(i)]->spec, t_i);
        const Tensor target = Tensor::from_data(
            {1, t_i.dim(0), t_i.dim(1), t_i.dim(2)},
            std::vector<float>(moved.probs.data().begin(), moved.probs.data().end()), false);
        parts.push_back(engine::softmax_ce_soft(s_i, target, with_batch_axis(moved.valid)));
      } else {
        const engine::IntMask hard = engine::argmax_channels(t_i);
        const engine::IntMask moved =
            augment::apply_mask(items[static_cast<size_t>(i)]->spec, hard, opts.ignore_index);
        parts.push_back(
            engine::softmax_ce_hard(s_i, with_batch_axis(moved), opts.ignore_index));
      }
    }
    const Tensor con = mean_of(std::move(parts));
    terms.con = con.item();
    total = engine::add(total, engine::scale(con, opts.weights.lambda1));
  }

  if (use_aux) {
    parts.clear();
    for (int i = 0; i < ns; ++i) {
      const auto& item = *items[static_cast<size_t>(i)];
      TSSL_CHECK_CODE(item.pseudo.has_value(), "sequencing",
                      "auxiliary objective needs a pseudo-mask for every batch item");
      const engine::IntMask moved =
          augment::apply_mask(item.spec, *item.pseudo, opts.ignore_index);
      parts.push_back(engine::softmax_ce_hard(engine::slice_batch(aux_logits, i),
                                              with_batch_axis(moved), opts.ignore_index));
    }
    const Tensor pl = mean_of(std::move(parts));
    terms.pl = pl.item();
    total = engine::add(total, engine::scale(pl, opts.weights.lambda2));
  }

  terms.total = total;
  return terms;
}

}  // namespace tssl::loss
