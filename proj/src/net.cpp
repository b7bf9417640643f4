#include "tssl/net.hpp"

#include <cmath>

namespace tssl::net {

namespace {

engine::Tensor he_init(engine::Shape shape, Rng& rng) {
  const int fan_in = shape[1] * shape[2] * shape[3];
  const float std_dev = std::sqrt(2.0f / static_cast<float>(fan_in));
  std::vector<float> v(static_cast<size_t>(engine::shape_numel(shape)));
  for (auto& x : v) x = static_cast<float>(rng.normal()) * std_dev;
  return engine::Tensor::from_data(std::move(shape), std::move(v), true);
}

}  // namespace

void validate_net(const NetConfig& cfg) {
  TSSL_CHECK_CODE(cfg.in_channels >= 1, "config",
                  "arch.input_channels must be >= 1, got " << cfg.in_channels);
  TSSL_CHECK_CODE(cfg.num_classes >= 2, "config",
                  "arch needs >= 2 classes, got " << cfg.num_classes);
  TSSL_CHECK_CODE(!cfg.trunk.empty(), "config", "arch trunk must have at least one block");
  for (const auto& b : cfg.trunk) {
    TSSL_CHECK_CODE(b.out_ch >= 1, "config", "arch trunk width must be >= 1, got " << b.out_ch);
    TSSL_CHECK_CODE(b.kernel >= 1 && b.kernel % 2 == 1, "config",
                    "arch kernel must be odd, got " << b.kernel);
    TSSL_CHECK_CODE(b.stride >= 1, "config", "arch stride must be >= 1, got " << b.stride);
  }
}

const char* aux_kind_name(AuxKind kind) {
  switch (kind) {
    case AuxKind::none:
      return "none";
    case AuxKind::stage2:
      return "stage2";
    case AuxKind::stage3:
      return "stage3";
  }
  return "?";
}

MultiTaskNet::MultiTaskNet(NetConfig cfg, AuxKind aux, uint64_t seed)
    : cfg_(std::move(cfg)), aux_(aux) {
  validate_net(cfg_);
  Rng rng(seed);

  int in_ch = cfg_.in_channels;
  for (size_t i = 0; i < cfg_.trunk.size(); ++i) {
    const auto& spec = cfg_.trunk[i];
    Block b;
    b.spec = spec;
    b.w = he_init({spec.out_ch, in_ch, spec.kernel, spec.kernel}, rng);
    b.b = engine::Tensor::zeros({spec.out_ch}, true);
    f_blocks_.push_back(std::move(b));
    in_ch = spec.out_ch;
  }
  f_head_.spec = {cfg_.num_classes, 1, 1};
  f_head_.w = he_init({cfg_.num_classes, in_ch, 1, 1}, rng);
  f_head_.b = engine::Tensor::zeros({cfg_.num_classes}, true);

  if (aux_ == AuxKind::stage2) {
    // Replacement for the last trunk block at half width, then a classifier.
    TSSL_CHECK(cfg_.trunk.size() >= 2, "stage2 auxiliary branch needs >= 2 trunk blocks");
    const auto& last = cfg_.trunk.back();
    const int prev_ch = cfg_.trunk[cfg_.trunk.size() - 2].out_ch;
    const int half = std::max(1, last.out_ch / 2);
    Block b;
    b.spec = {half, last.kernel, last.stride};
    b.w = he_init({half, prev_ch, last.kernel, last.kernel}, rng);
    b.b = engine::Tensor::zeros({half}, true);
    aux_blocks_.push_back(std::move(b));
    aux_head_.spec = {cfg_.num_classes, 1, 1};
    aux_head_.w = he_init({cfg_.num_classes, half, 1, 1}, rng);
    aux_head_.b = engine::Tensor::zeros({cfg_.num_classes}, true);
  } else if (aux_ == AuxKind::stage3) {
    aux_head_.spec = {cfg_.num_classes, 1, 1};
    aux_head_.w = he_init({cfg_.num_classes, in_ch, 1, 1}, rng);
    aux_head_.b = engine::Tensor::zeros({cfg_.num_classes}, true);
  }

  for (size_t i = 0; i < f_blocks_.size(); ++i) {
    const std::string base = "f.conv" + std::to_string(i + 1);
    student_.add(base + ".weight", f_blocks_[i].w);
    student_.add(base + ".bias", f_blocks_[i].b);
  }
  student_.add("f.head.weight", f_head_.w);
  student_.add("f.head.bias", f_head_.b);

  if (aux_ == AuxKind::stage2) {
    const std::string base = "aux.conv" + std::to_string(cfg_.trunk.size());
    aux_own_.add(base + ".weight", aux_blocks_[0].w);
    aux_own_.add(base + ".bias", aux_blocks_[0].b);
  }
  if (aux_ != AuxKind::none) {
    aux_own_.add("aux.head.weight", aux_head_.w);
    aux_own_.add("aux.head.bias", aux_head_.b);
  }

  // The teacher starts as an exact copy of the student and is only ever
  // updated through ema_update / teacher_copy_from_student. It reuses the
  // student's names so the two sets stay EMA-compatible; checkpoints export
  // it under the "teacher." prefix.
  for (const auto& e : student_) {
    teacher_.add(e.name, e.tensor.detached_copy());
  }
}

engine::Tensor MultiTaskNet::run_trunk(const engine::Tensor& x, const std::vector<Block>& blocks,
                                       size_t count) const {
  engine::Tensor h = x;
  for (size_t i = 0; i < count; ++i) {
    const auto& b = blocks[i];
    h = engine::relu(engine::conv2d(h, b.w, b.b, b.spec.stride, b.spec.kernel / 2));
  }
  return h;
}

engine::Tensor MultiTaskNet::run_head(const engine::Tensor& h, const Block& head, int out_h,
                                      int out_w) const {
  engine::Tensor logits = engine::conv2d(h, head.w, head.b, 1, 0);
  if (logits.dim(2) == out_h && logits.dim(3) == out_w) return logits;
  return engine::bilinear_upsample(logits, out_h, out_w);
}

engine::Tensor MultiTaskNet::forward(const engine::Tensor& x) const {
  TSSL_CHECK(x.rank() == 4, "net input must be [N,C,H,W], got " << engine::shape_str(x.shape()));
  const engine::Tensor h = run_trunk(x, f_blocks_, f_blocks_.size());
  return run_head(h, f_head_, x.dim(2), x.dim(3));
}

std::pair<engine::Tensor, engine::Tensor> MultiTaskNet::forward_with_aux(
    const engine::Tensor& x) const {
  TSSL_CHECK_CODE(aux_ != AuxKind::none, "sequencing",
                  "auxiliary forward requested but this net has no auxiliary branch");
  TSSL_CHECK(x.rank() == 4, "net input must be [N,C,H,W], got " << engine::shape_str(x.shape()));
  const size_t shared =
      aux_ == AuxKind::stage2 ? f_blocks_.size() - 1 : f_blocks_.size();
  const engine::Tensor trunk_shared = run_trunk(x, f_blocks_, shared);

  engine::Tensor f_feat = trunk_shared;
  if (shared < f_blocks_.size()) {
    const auto& b = f_blocks_.back();
    f_feat = engine::relu(engine::conv2d(f_feat, b.w, b.b, b.spec.stride, b.spec.kernel / 2));
  }
  const engine::Tensor f_logits = run_head(f_feat, f_head_, x.dim(2), x.dim(3));

  engine::Tensor a_feat = trunk_shared;
  for (const auto& b : aux_blocks_) {
    a_feat = engine::relu(engine::conv2d(a_feat, b.w, b.b, b.spec.stride, b.spec.kernel / 2));
  }
  const engine::Tensor a_logits = run_head(a_feat, aux_head_, x.dim(2), x.dim(3));
  return {f_logits, a_logits};
}

engine::Tensor MultiTaskNet::forward_teacher(const engine::Tensor& x) const {
  engine::NoGradGuard ng;
  TSSL_CHECK(x.rank() == 4, "net input must be [N,C,H,W], got " << engine::shape_str(x.shape()));
  engine::Tensor h = x;
  for (size_t i = 0; i < f_blocks_.size(); ++i) {
    const auto& spec = f_blocks_[i].spec;
    const std::string base = "f.conv" + std::to_string(i + 1);
    const auto* w = teacher_.find(base + ".weight");
    const auto* b = teacher_.find(base + ".bias");
    h = engine::relu(engine::conv2d(h, *w, *b, spec.stride, spec.kernel / 2));
  }
  engine::Tensor logits = engine::conv2d(h, *teacher_.find("f.head.weight"),
                                         *teacher_.find("f.head.bias"), 1, 0);
  if (logits.dim(2) != x.dim(2) || logits.dim(3) != x.dim(3)) {
    logits = engine::bilinear_upsample(logits, x.dim(2), x.dim(3));
  }
  return engine::softmax_channels(logits);
}

engine::ParamSet MultiTaskNet::aux_view() const {
  TSSL_CHECK_CODE(aux_ != AuxKind::none, "sequencing", "this net has no auxiliary branch");
  engine::ParamSet view;
  const size_t shared_blocks =
      aux_ == AuxKind::stage2 ? f_blocks_.size() - 1 : f_blocks_.size();
  for (size_t i = 0; i < shared_blocks; ++i) {
    const std::string base = "f.conv" + std::to_string(i + 1);
    view.add(base + ".weight", f_blocks_[i].w);
    view.add(base + ".bias", f_blocks_[i].b);
  }
  for (const auto& e : aux_own_) view.add(e.name, e.tensor);
  return view;
}

engine::ParamSet MultiTaskNet::trainable_params() const {
  engine::ParamSet out;
  for (const auto& e : student_) out.add(e.name, e.tensor);
  for (const auto& e : aux_own_) {
    if (!out.contains_tensor(e.tensor.id())) out.add(e.name, e.tensor);
  }
  return out;
}

engine::ParamSet MultiTaskNet::all_params() const {
  engine::ParamSet out;
  for (const auto& e : student_) out.add(e.name, e.tensor);
  for (const auto& e : aux_own_) out.add(e.name, e.tensor);
  for (const auto& e : teacher_) out.add("teacher." + e.name.substr(2), e.tensor);
  return out;
}

void MultiTaskNet::teacher_copy_from_student() {
  for (size_t i = 0; i < student_.size(); ++i) {
    auto dst = teacher_.at(i).tensor.mutable_data();
    const auto src = student_.at(i).tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void MultiTaskNet::load_student_params(const engine::ParamSet& src) {
  for (auto& e : student_) {
    const auto* found = src.find(e.name);
    TSSL_CHECK_CODE(found != nullptr, "io", "checkpoint is missing parameter '" << e.name << "'");
    TSSL_CHECK_CODE(engine::same_shape(found->shape(), e.tensor.shape()), "io",
                    "checkpoint shape mismatch for '"
                        << e.name << "': " << engine::shape_str(found->shape()) << " vs "
                        << engine::shape_str(e.tensor.shape()));
    auto dst = e.tensor.mutable_data();
    const auto s = found->data();
    std::copy(s.begin(), s.end(), dst.begin());
  }
  teacher_copy_from_student();
}

}  // namespace tssl::net
