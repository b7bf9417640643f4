#include "tssl/trainer.hpp"

#include <chrono>
#include <cinttypes>

#include "tssl/engine/checkpoint.hpp"

namespace tssl::trainer {

namespace {

using Clock = std::chrono::steady_clock;

int64_t ms_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
}

constexpr int kEvalBatch = 8;

// Forward a list of samples in fixed-size batches and hand each sample's
// argmax plane to `consume`.
template <typename Consume>
void predict_masks(const net::MultiTaskNet& net, const std::vector<data::Sample>& samples,
                   Consume&& consume) {
  engine::NoGradGuard ng;
  const size_t n = samples.size();
  for (size_t begin = 0; begin < n; begin += kEvalBatch) {
    const size_t count = std::min(static_cast<size_t>(kEvalBatch), n - begin);
    const auto& first = samples[begin].image;
    const int C = first.dim(0), H = first.dim(1), W = first.dim(2);
    const size_t sample_len = static_cast<size_t>(C) * H * W;
    std::vector<float> buf(count * sample_len);
    for (size_t i = 0; i < count; ++i) {
      const auto img = samples[begin + i].image.data();
      std::copy(img.begin(), img.end(), buf.begin() + static_cast<ptrdiff_t>(i * sample_len));
    }
    const engine::Tensor x = engine::Tensor::from_data({static_cast<int>(count), C, H, W},
                                                       std::move(buf), false);
    const engine::IntMask pred = engine::argmax_channels(net.forward(x));
    const size_t plane = static_cast<size_t>(H) * W;
    for (size_t i = 0; i < count; ++i) {
      engine::IntMask m;
      m.shape = {H, W};
      m.v.assign(pred.v.begin() + static_cast<ptrdiff_t>(i * plane),
                 pred.v.begin() + static_cast<ptrdiff_t>((i + 1) * plane));
      consume(begin + i, std::move(m));
    }
  }
}

}  // namespace

void validate_stage_settings(const StageSettings& s) {
  TSSL_CHECK_CODE(s.steps >= 1, "config", "train.steps must be >= 1, got " << s.steps);
  TSSL_CHECK_CODE(s.b1 >= 0, "config", "train.b1 must be >= 0, got " << s.b1);
  TSSL_CHECK_CODE(s.b2 >= 0, "config", "train.b2 must be >= 0, got " << s.b2);
  TSSL_CHECK_CODE(s.b1 + s.b2 >= 1, "config", "train batch is empty (b1 + b2 == 0)");
  TSSL_CHECK_CODE(s.adam.lr > 0.0f, "config", "train.lr must be positive, got " << s.adam.lr);
  TSSL_CHECK_CODE(s.weights.lambda1 >= 0.0f && s.weights.lambda2 >= 0.0f, "config",
                  "loss weights must be non-negative");
  TSSL_CHECK_CODE(s.ema_alpha >= 0.0f && s.ema_alpha <= 1.0f, "config",
                  "train.ema_alpha must be in [0,1], got " << s.ema_alpha);
  TSSL_CHECK_CODE(s.eval_every >= 1, "config",
                  "train.eval_every must be >= 1, got " << s.eval_every);
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, bool truncate) {
  const bool fresh = truncate || !std::filesystem::exists(path) ||
                     std::filesystem::file_size(path) == 0;
  os_.open(path, truncate ? std::ios::trunc : std::ios::app);
  TSSL_CHECK_CODE(os_.good(), "io", "cannot open metrics file " << path.string());
  if (fresh) {
    os_ << "step,stage,loss_seg,loss_con,loss_pl,val_miou,pseudo_miou\n";
    os_.flush();
  }
}

void MetricsWriter::row(int64_t step, int stage, double seg, double con, double pl,
                        double val_miou, double pseudo_miou) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%" PRId64 ",%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", step, stage, seg,
                con, pl, val_miou, pseudo_miou);
  os_ << buf;
  os_.flush();
  TSSL_CHECK_CODE(os_.good(), "io", "failed writing metrics row");
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  TSSL_CHECK_CODE(is.good(), "io", "cannot open metrics file " << path.string());
  std::string line;
  TSSL_CHECK_CODE(static_cast<bool>(std::getline(is, line)), "io",
                  path.string() << " is empty");
  TSSL_CHECK_CODE(line == "step,stage,loss_seg,loss_con,loss_pl,val_miou,pseudo_miou",
                  "io", path.string() << " has an unexpected header: " << line);
  std::vector<MetricsRow> rows;
  size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    MetricsRow r;
    const int got =
        std::sscanf(line.c_str(), "%" SCNd64 ",%d,%lf,%lf,%lf,%lf,%lf", &r.step, &r.stage,
                    &r.loss_seg, &r.loss_con, &r.loss_pl, &r.val_miou, &r.pseudo_miou);
    TSSL_CHECK_CODE(got == 7, "io",
                    path.string() << ":" << line_no << ": malformed metrics row: " << line);
    rows.push_back(r);
  }
  return rows;
}

eval::MiouReport evaluate_student(const net::MultiTaskNet& net, const data::Dataset& ds) {
  eval::ConfusionMatrix cm(ds.num_classes);
  predict_masks(net, ds.samples, [&](size_t i, engine::IntMask pred) {
    const auto& s = ds.samples[i];
    TSSL_CHECK(s.gt.has_value(), "evaluation sample '" << s.id << "' has no ground truth");
    cm.add(*s.gt, pred, data::kIgnoreIndex);
  });
  return eval::compute_miou(cm);
}

eval::MiouReport evaluate_params(const engine::ParamSet& student_like,
                                 const net::NetConfig& arch, const data::Dataset& ds) {
  net::MultiTaskNet net(arch, net::AuxKind::none, 0);
  net.load_student_params(student_like);
  return evaluate_student(net, ds);
}

PseudoMaskStore generate_store(const net::MultiTaskNet& net, const data::TrainView& train,
                               const std::string& tag, const std::string& checkpoint_hex) {
  PseudoMaskStore store(tag, checkpoint_hex);
  predict_masks(net, train.samples, [&](size_t i, engine::IntMask mask) {
    store.add(train.samples[i].id, std::move(mask));
  });
  return store;
}

double pseudo_quality(const PseudoMaskStore& store, const data::Dataset& train_full) {
  eval::ConfusionMatrix cm(train_full.num_classes);
  int64_t with_gt = 0;
  for (const auto& s : train_full.samples) {
    if (!s.gt.has_value()) continue;
    const auto* m = store.find(s.id);
    TSSL_CHECK(m != nullptr, "pseudo-mask store has no entry for sample '" << s.id << "'");
    cm.add(*s.gt, *m, data::kIgnoreIndex);
    ++with_gt;
  }
  TSSL_CHECK(with_gt > 0, "no ground truth available to score the pseudo-mask store");
  return eval::compute_miou(cm).miou;
}

StageResult run_stage(const StageSetup& setup, const data::TrainView& train,
                      const data::Dataset& val, const PseudoMaskStore* store,
                      MetricsWriter& metrics) {
  TSSL_CHECK(setup.stage >= 1 && setup.stage <= 3,
             "stage must be 1, 2 or 3, got " << setup.stage);
  validate_stage_settings(setup.settings);
  augment::validate_policy(setup.policy);
  net::validate_net(setup.arch);
  TSSL_CHECK(train.height == val.height && train.width == val.width,
             "train/val image sizes differ");

  const auto& s = setup.settings;
  const int b1 = setup.stage == 1 ? 0 : s.b1;
  const int b2 = s.b2;
  TSSL_CHECK(b1 + b2 >= 1, "stage " << setup.stage << " batch is empty");
  const bool use_aux = setup.stage >= 2 && setup.switches.aux_task && s.weights.lambda2 > 0.0f;
  if (use_aux) {
    TSSL_CHECK_CODE(store != nullptr, "sequencing",
                    "stage " << setup.stage << " needs the pseudo-mask store of stage "
                             << setup.stage - 1);
    store->require_complete(train);
  }

  const uint64_t stage_seed = mix_seed(setup.run_seed, static_cast<uint64_t>(setup.stage));
  net::AuxKind kind = net::AuxKind::none;
  if (setup.stage == 2) {
    kind = net::AuxKind::stage2;
  } else if (setup.stage == 3) {
    kind = setup.switches.deep_share ? net::AuxKind::stage3 : net::AuxKind::stage2;
  }

  StageResult result;
  result.net = std::make_shared<net::MultiTaskNet>(setup.arch, kind, mix_seed(stage_seed, 1));
  auto& net = *result.net;
  engine::ParamSet trainable = net.trainable_params();
  engine::AdamState adam(trainable, s.adam);
  data::BatchSampler sampler(train.all_indices(), train.labelled_indices(),
                             mix_seed(stage_seed, 2));
  Rng aug_rng(mix_seed(stage_seed, 3));

  result.pseudo_quality_in = setup.store_quality;
  const float alpha_eff = setup.switches.ema ? s.ema_alpha : 0.0f;

  loss::Options opts;
  opts.stage = setup.stage;
  opts.weights = s.weights;
  opts.consistency = setup.switches.consistency;
  opts.aux_task = setup.switches.aux_task;
  opts.soft_target = setup.soft_target;
  opts.ignore_index = data::kIgnoreIndex;
  opts.fill = train.mean_rgb;

  std::error_code ec;
  std::filesystem::create_directories(setup.stage_dir, ec);
  TSSL_CHECK_CODE(std::filesystem::is_directory(setup.stage_dir), "io",
                  "cannot create stage directory " << setup.stage_dir.string());

  const auto t0 = Clock::now();
  double last_val = 0.0;
  // The store's quality is evaluated by the caller (it needs the hidden
  // ground truth the trainer must not see) and logged verbatim.
  const double store_metric = setup.store_quality;

  auto make_item = [&](size_t idx, bool strong) {
    const data::Sample& sample = train.samples[idx];
    loss::Item item;
    const bool wflip = setup.weak_flip && aug_rng.bernoulli(0.5);
    item.image = wflip ? augment::flip_image(sample.image) : sample.image;
    if (sample.gt.has_value()) {
      item.gt = wflip ? augment::flip_mask(*sample.gt) : *sample.gt;
    }
    if (use_aux) {
      const auto* pm = store->find(sample.id);
      item.pseudo = wflip ? augment::flip_mask(*pm) : *pm;
    }
    if (strong && setup.switches.strong_aug) {
      item.spec = augment::sample_spec(aug_rng.next(), setup.policy, train.height, train.width);
    } else {
      item.spec = augment::identity_spec();
    }
    return item;
  };

  for (int step = 1; step <= s.steps; ++step) {
    const auto draw = sampler.next(b1, b2);
    loss::StageBatch batch;
    batch.sub1.reserve(draw.sub1.size());
    batch.sub2.reserve(draw.sub2.size());
    for (size_t idx : draw.sub1) batch.sub1.push_back(make_item(idx, true));
    for (size_t idx : draw.sub2) batch.sub2.push_back(make_item(idx, false));

    const loss::Terms terms = loss::stage_loss(net, batch, opts);
    trainable.zero_grad();
    engine::backward(terms.total);
    engine::adam_step(trainable, adam);
    engine::ema_update(net.teacher_params(), net.student_params(), alpha_eff);

    if (step % s.eval_every == 0 || step == s.steps) {
      last_val = evaluate_student(net, val).miou;
      metrics.row(step, setup.stage, terms.seg, terms.con, terms.pl, last_val, store_metric);
    }
  }

  result.ckpt = setup.stage_dir / "ckpt.tssl";
  engine::save_checkpoint(result.ckpt, net.all_params());
  result.final_val_miou = last_val;
  result.wall_ms = ms_since(t0);
  return result;
}

PipelineResult run_pipeline(const PipelineSettings& settings, const data::Dataset& train_full,
                            const data::Dataset& val) {
  const data::TrainView view = make_train_view(train_full);
  std::error_code ec;
  std::filesystem::create_directories(settings.out, ec);
  TSSL_CHECK_CODE(std::filesystem::is_directory(settings.out), "io",
                  "cannot create output directory " << settings.out.string());
  MetricsWriter metrics(settings.out / "metrics.csv", true);

  PipelineResult result;
  PseudoMaskStore store;
  double quality_in = -1.0;

  for (int stage = 1; stage <= 3; ++stage) {
    StageSetup setup;
    setup.stage = stage;
    setup.settings = settings.stages[stage - 1];
    setup.switches = settings.switches;
    setup.soft_target = settings.soft_target;
    setup.weak_flip = settings.weak_flip;
    setup.policy = settings.policy;
    setup.arch = settings.arch;
    setup.run_seed = settings.seed;
    setup.stage_dir = settings.out / ("stage" + std::to_string(stage));

    setup.store_quality = quality_in;
    const PseudoMaskStore* in_store = stage >= 2 ? &store : nullptr;
    StageResult sr = run_stage(setup, view, val, in_store, metrics);

    StageSummary summary;
    summary.stage = stage;
    summary.val_miou = sr.final_val_miou;
    summary.pseudo_quality_in = quality_in;
    summary.wall_ms = sr.wall_ms;

    if (stage < 3) {
      const std::string tag = "stage" + std::to_string(stage);
      PseudoMaskStore produced =
          generate_store(*sr.net, view, tag, hex64(engine::file_fingerprint(sr.ckpt)));
      produced.save(setup.stage_dir / "pseudo");
      summary.pseudo_quality_out = pseudo_quality(produced, train_full);
      quality_in = summary.pseudo_quality_out;
      store = std::move(produced);
    }
    result.stages.push_back(summary);
  }

  write_summary_csv(settings.out / "summary.csv", result);
  return result;
}

void write_summary_csv(const std::filesystem::path& path, const PipelineResult& result) {
  std::ofstream os(path, std::ios::trunc);
  TSSL_CHECK_CODE(os.good(), "io", "cannot write " << path.string());
  os << "stage,val_miou,pseudo_quality_in,pseudo_quality_out,wall_ms\n";
  for (const auto& s : result.stages) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%" PRId64 "\n", s.stage, s.val_miou,
                  s.pseudo_quality_in, s.pseudo_quality_out, s.wall_ms);
    os << buf;
  }
  os.flush();
  TSSL_CHECK_CODE(os.good(), "io", "failed writing " << path.string());
}

std::vector<StageSummary> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  TSSL_CHECK_CODE(is.good(), "io", "cannot open " << path.string());
  std::string line;
  TSSL_CHECK_CODE(static_cast<bool>(std::getline(is, line)) &&
                      line == "stage,val_miou,pseudo_quality_in,pseudo_quality_out,wall_ms",
                  "io", path.string() << " has an unexpected header");
  std::vector<StageSummary> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    StageSummary s;
    const int got = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%" SCNd64, &s.stage, &s.val_miou,
                                &s.pseudo_quality_in, &s.pseudo_quality_out, &s.wall_ms);
    TSSL_CHECK_CODE(got == 5, "io", path.string() << ": malformed summary row: " << line);
    rows.push_back(s);
  }
  return rows;
}

}  // namespace tssl::trainer
