#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tssl/engine/checkpoint.hpp"
#include "tssl/trainer.hpp"

using tssl::data::Dataset;
using tssl::data::SynthConfig;
using tssl::data::TrainView;
using tssl::trainer::MetricsWriter;
using tssl::trainer::PipelineResult;
using tssl::trainer::PseudoMaskStore;
using tssl::trainer::read_metrics_csv;
using tssl::trainer::read_summary_csv;
using tssl::trainer::run_stage;
using tssl::trainer::StageResult;
using tssl::trainer::StageSettings;
using tssl::trainer::StageSetup;
using tssl::trainer::StageSummary;
using tssl::trainer::validate_stage_settings;
using tssl::trainer::write_summary_csv;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("tssl_trainer_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

tssl::net::NetConfig tiny_arch() {
  tssl::net::NetConfig cfg;
  cfg.trunk = {{6, 3, 2}, {8, 3, 1}, {8, 3, 1}};
  return cfg;
}

struct Fixture {
  Dataset train;
  Dataset val;
  TrainView view;
};

Fixture make_fixture(int train_count, int val_count, int labelled) {
  SynthConfig cfg;
  cfg.image_size = 16;
  Fixture f;
  f.train = tssl::data::synth_dataset(cfg, 1301, train_count, "t", 0);
  tssl::data::SplitSpec spec;
  spec.count = labelled;
  spec.seed = 5;
  tssl::data::apply_split(f.train, spec);
  f.val = tssl::data::synth_dataset(cfg, 1301, val_count, "v", 1);
  f.view = tssl::data::make_train_view(f.train);
  return f;
}

StageSetup base_setup(int stage, const fs::path& dir, uint64_t seed) {
  StageSetup setup;
  setup.stage = stage;
  setup.settings.steps = 6;
  setup.settings.b1 = 2;
  setup.settings.b2 = 2;
  setup.settings.eval_every = 3;
  setup.arch = tiny_arch();
  setup.run_seed = seed;
  setup.stage_dir = dir;
  return setup;
}

PseudoMaskStore store_from_gt(const Dataset& ds) {
  PseudoMaskStore store("stage1", "0");
  for (const auto& s : ds.samples) store.add(s.id, *s.gt);
  return store;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("stage settings are validated") {
  StageSettings s;
  CHECK_NOTHROW(validate_stage_settings(s));
  s.steps = 0;
  CHECK_THROWS_AS(validate_stage_settings(s), tssl::Error);
  s = StageSettings{};
  s.b1 = 0;
  s.b2 = 0;
  CHECK_THROWS_AS(validate_stage_settings(s), tssl::Error);
  s = StageSettings{};
  s.b1 = -1;
  CHECK_THROWS_AS(validate_stage_settings(s), tssl::Error);
  s = StageSettings{};
  s.adam.lr = 0.0f;
  CHECK_THROWS_AS(validate_stage_settings(s), tssl::Error);
  s = StageSettings{};
  s.weights.lambda1 = -0.1f;
  CHECK_THROWS_AS(validate_stage_settings(s), tssl::Error);
  s = StageSettings{};
  s.ema_alpha = 1.5f;
  CHECK_THROWS_AS(validate_stage_settings(s), tssl::Error);
  s = StageSettings{};
  s.eval_every = 0;
  CHECK_THROWS_AS(validate_stage_settings(s), tssl::Error);
}

TEST_CASE("metrics rows round-trip through the csv") {
  const auto dir = fresh_dir("metrics");
  const auto path = dir / "metrics.csv";
  {
    MetricsWriter w(path, true);
    w.row(200, 1, 1.25, 0.0, 0.0, 0.5, -1.0);
    w.row(400, 1, 0.75, 0.0, 0.0, 0.625, -1.0);
  }
  {
    MetricsWriter w(path, false);  // append keeps existing rows, no new header
    w.row(200, 2, 0.5, 0.25, 0.125, 0.75, 0.8125);
  }
  const auto rows = read_metrics_csv(path);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].step == 200);
  CHECK(rows[0].stage == 1);
  CHECK(rows[0].loss_seg == 1.25);
  CHECK(rows[0].pseudo_miou == -1.0);
  CHECK(rows[1].val_miou == 0.625);
  CHECK(rows[2].stage == 2);
  CHECK(rows[2].loss_con == 0.25);
  CHECK(rows[2].val_miou == 0.75);
  CHECK(rows[2].pseudo_miou == 0.8125);

  {
    MetricsWriter w(path, true);  // truncate starts the file over
    w.row(1, 1, 0.0, 0.0, 0.0, 0.0, -1.0);
  }
  CHECK(read_metrics_csv(path).size() == 1);

  std::ofstream(path, std::ios::trunc) << "nope\n";
  CHECK_THROWS_AS(read_metrics_csv(path), tssl::Error);
  CHECK_THROWS_AS(read_metrics_csv(dir / "missing.csv"), tssl::Error);
  fs::remove_all(dir);
}

TEST_CASE("summary csv round-trips including absent-quality sentinels") {
  const auto dir = fresh_dir("summary");
  PipelineResult result;
  result.stages.push_back({1, 0.5, -1.0, 0.625, 1200});
  result.stages.push_back({2, 0.75, 0.625, 0.8125, 3400});
  result.stages.push_back({3, 0.8125, 0.8125, -1.0, 3300});
  const auto path = dir / "summary.csv";
  write_summary_csv(path, result);

  const auto rows = read_summary_csv(path);
  REQUIRE(rows.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(rows[i].stage == result.stages[i].stage);
    CHECK(rows[i].val_miou == result.stages[i].val_miou);
    CHECK(rows[i].pseudo_quality_in == result.stages[i].pseudo_quality_in);
    CHECK(rows[i].pseudo_quality_out == result.stages[i].pseudo_quality_out);
    CHECK(rows[i].wall_ms == result.stages[i].wall_ms);
  }

  // Rewriting what was read reproduces the bytes (the CLI relies on this to
  // extend the summary stage by stage).
  PipelineResult echo;
  echo.stages = rows;
  write_summary_csv(dir / "echo.csv", echo);
  std::ifstream a(path, std::ios::binary), b(dir / "echo.csv", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);

  std::ofstream(path, std::ios::trunc) << "stage,val\n1,0.5\n";
  CHECK_THROWS_AS(read_summary_csv(path), tssl::Error);
  fs::remove_all(dir);
}

TEST_CASE("identical seeds reproduce a stage bit for bit") {
  const auto fx = make_fixture(12, 6, 4);
  const auto dir_a = fresh_dir("det_a");
  const auto dir_b = fresh_dir("det_b");
  const auto dir_c = fresh_dir("det_c");

  MetricsWriter ma(dir_a / "metrics.csv", true);
  const StageResult ra = run_stage(base_setup(1, dir_a, 77), fx.view, fx.val, nullptr, ma);
  MetricsWriter mb(dir_b / "metrics.csv", true);
  const StageResult rb = run_stage(base_setup(1, dir_b, 77), fx.view, fx.val, nullptr, mb);
  MetricsWriter mc(dir_c / "metrics.csv", true);
  const StageResult rc = run_stage(base_setup(1, dir_c, 78), fx.view, fx.val, nullptr, mc);

  CHECK(tssl::engine::file_fingerprint(ra.ckpt) == tssl::engine::file_fingerprint(rb.ckpt));
  CHECK(tssl::engine::file_fingerprint(ra.ckpt) != tssl::engine::file_fingerprint(rc.ckpt));
  CHECK(ra.final_val_miou == rb.final_val_miou);

  // No wall-clock column, so whole metrics files match byte for byte.
  CHECK(tssl::engine::file_fingerprint(dir_a / "metrics.csv") ==
        tssl::engine::file_fingerprint(dir_b / "metrics.csv"));
  CHECK(!read_metrics_csv(dir_a / "metrics.csv").empty());
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  fs::remove_all(dir_c);
}

TEST_CASE("the supervised stage trains the labelled pool only") {
  const auto fx = make_fixture(10, 4, 3);
  const auto dir = fresh_dir("stage1");
  MetricsWriter m(dir / "metrics.csv", true);
  auto setup = base_setup(1, dir, 3);
  setup.settings.b1 = 4;  // ignored in the first stage
  const StageResult r = run_stage(setup, fx.view, fx.val, nullptr, m);
  CHECK(fs::exists(r.ckpt));
  CHECK(r.pseudo_quality_in == -1.0);
  const auto rows = read_metrics_csv(dir / "metrics.csv");
  REQUIRE(!rows.empty());
  for (const auto& row : rows) {
    CHECK(row.stage == 1);
    CHECK(row.loss_con == 0.0);
    CHECK(row.loss_pl == 0.0);
    CHECK(row.pseudo_miou == -1.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("later stages demand a complete pseudo-mask store") {
  const auto fx = make_fixture(8, 4, 3);
  const auto dir = fresh_dir("store_gate");
  MetricsWriter m(dir / "metrics.csv", true);

  auto setup = base_setup(2, dir, 9);
  try {
    run_stage(setup, fx.view, fx.val, nullptr, m);
    FAIL("expected a sequencing error");
  } catch (const tssl::Error& e) {
    CHECK(e.code() == "sequencing");
  }

  PseudoMaskStore partial("stage1", "0");
  partial.add(fx.view.samples[0].id, *fx.train.samples[0].gt);
  CHECK_THROWS_AS(run_stage(setup, fx.view, fx.val, &partial, m), tssl::Error);

  // Switching the auxiliary task off (or zeroing its weight) removes the
  // dependency entirely.
  auto no_aux = setup;
  no_aux.switches.aux_task = false;
  CHECK_NOTHROW(run_stage(no_aux, fx.view, fx.val, nullptr, m));
  auto zero_w = setup;
  zero_w.settings.weights.lambda2 = 0.0f;
  CHECK_NOTHROW(run_stage(zero_w, fx.view, fx.val, nullptr, m));

  const PseudoMaskStore full = store_from_gt(fx.train);
  setup.store_quality = 1.0;
  const StageResult r = run_stage(setup, fx.view, fx.val, &full, m);
  CHECK(r.pseudo_quality_in == 1.0);
  fs::remove_all(dir);
}

TEST_CASE("supervised loss decreases over a short run") {
  const auto fx = make_fixture(16, 6, 16);
  const auto dir = fresh_dir("descent");
  MetricsWriter m(dir / "metrics.csv", true);
  auto setup = base_setup(1, dir, 11);
  setup.settings.steps = 80;
  setup.settings.b2 = 4;
  setup.settings.eval_every = 1;
  run_stage(setup, fx.view, fx.val, nullptr, m);
  const auto rows = read_metrics_csv(dir / "metrics.csv");
  REQUIRE(rows.size() == 80);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 15; ++i) {
    head += rows[static_cast<size_t>(i)].loss_seg;
    tail += rows[rows.size() - 1 - static_cast<size_t>(i)].loss_seg;
  }
  CHECK(tail < head);
  fs::remove_all(dir);
}

TEST_CASE("the ema switch decides whether the teacher lags the student") {
  const auto fx = make_fixture(8, 4, 4);
  const auto dir = fresh_dir("ema");
  MetricsWriter m(dir / "metrics.csv", true);

  auto pinned = base_setup(1, dir / "pinned", 13);
  pinned.switches.ema = false;
  const StageResult rp = run_stage(pinned, fx.view, fx.val, nullptr, m);
  for (size_t i = 0; i < rp.net->student_params().size(); ++i) {
    const auto s = rp.net->student_params().at(i).tensor.data();
    const auto t = rp.net->teacher_params().at(i).tensor.data();
    CHECK(std::memcmp(s.data(), t.data(), s.size() * sizeof(float)) == 0);
  }

  auto lagged = base_setup(1, dir / "lagged", 13);
  const StageResult rl = run_stage(lagged, fx.view, fx.val, nullptr, m);
  bool differs = false;
  for (size_t i = 0; i < rl.net->student_params().size() && !differs; ++i) {
    const auto s = rl.net->student_params().at(i).tensor.data();
    const auto t = rl.net->teacher_params().at(i).tensor.data();
    differs = std::memcmp(s.data(), t.data(), s.size() * sizeof(float)) != 0;
  }
  CHECK(differs);
  fs::remove_all(dir);
}

TEST_CASE("generated stores cover the view and score perfectly on ground truth") {
  const auto fx = make_fixture(6, 3, 2);
  const tssl::net::MultiTaskNet net(tiny_arch(), tssl::net::AuxKind::none, 42);
  const auto store = tssl::trainer::generate_store(net, fx.view, "stage1", "cafe");
  CHECK(store.size() == fx.view.samples.size());
  CHECK(store.tag() == "stage1");
  CHECK_NOTHROW(store.require_complete(fx.view));
  for (size_t i = 0; i < fx.view.samples.size(); ++i) {
    CHECK(store.entries()[i].first == fx.view.samples[i].id);
  }
  const double q = tssl::trainer::pseudo_quality(store, fx.train);
  CHECK(q >= 0.0);
  CHECK(q <= 1.0);
  CHECK(tssl::trainer::pseudo_quality(store_from_gt(fx.train), fx.train) == 1.0);
}

TEST_CASE("evaluating a checkpointed parameter set matches the live net") {
  const auto fx = make_fixture(6, 4, 2);
  const tssl::net::MultiTaskNet net(tiny_arch(), tssl::net::AuxKind::stage2, 4242);
  const auto live = tssl::trainer::evaluate_student(net, fx.val);
  const auto from_params = tssl::trainer::evaluate_params(net.all_params(), tiny_arch(), fx.val);
  CHECK(live.miou == from_params.miou);
  REQUIRE(live.per_class.size() == from_params.per_class.size());
  for (size_t i = 0; i < live.per_class.size(); ++i) {
    CHECK(live.per_class[i].iou == from_params.per_class[i].iou);
  }
}

TEST_CASE("a miniature pipeline chains stores, checkpoints, and summaries") {
  SynthConfig cfg;
  cfg.image_size = 16;
  auto train = tssl::data::synth_dataset(cfg, 2202, 12, "t", 0);
  tssl::data::SplitSpec spec;
  spec.count = 4;
  tssl::data::apply_split(train, spec);
  const auto val = tssl::data::synth_dataset(cfg, 2202, 6, "v", 1);

  tssl::trainer::PipelineSettings settings;
  for (auto& s : settings.stages) {
    s.steps = 4;
    s.b1 = 2;
    s.b2 = 2;
    s.eval_every = 2;
  }
  settings.arch = tiny_arch();
  settings.seed = 31;
  settings.out = fresh_dir("pipeline");

  const PipelineResult result = tssl::trainer::run_pipeline(settings, train, val);
  REQUIRE(result.stages.size() == 3);
  CHECK(result.stages[0].pseudo_quality_in == -1.0);
  CHECK(result.stages[0].pseudo_quality_out >= 0.0);
  CHECK(result.stages[1].pseudo_quality_in == result.stages[0].pseudo_quality_out);
  CHECK(result.stages[2].pseudo_quality_in == result.stages[1].pseudo_quality_out);
  CHECK(result.stages[2].pseudo_quality_out == -1.0);

  for (int stage = 1; stage <= 3; ++stage) {
    CHECK(fs::exists(settings.out / ("stage" + std::to_string(stage)) / "ckpt.tssl"));
  }
  CHECK(fs::exists(settings.out / "stage1" / "pseudo" / "manifest.txt"));
  CHECK(fs::exists(settings.out / "stage2" / "pseudo" / "manifest.txt"));
  CHECK_FALSE(fs::exists(settings.out / "stage3" / "pseudo"));

  const auto summary = read_summary_csv(settings.out / "summary.csv");
  REQUIRE(summary.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(summary[i].stage == static_cast<int>(i + 1));
  }
  const auto rows = read_metrics_csv(settings.out / "metrics.csv");
  CHECK(rows.size() == 6);  // two eval points per stage
  CHECK(rows.front().stage == 1);
  CHECK(rows.back().stage == 3);
  // Stages 2 and 3 log the quality of the store they train against.
  CHECK(rows.back().pseudo_miou == summary[1].pseudo_quality_out);
  fs::remove_all(settings.out);
}

}  // TEST_SUITE
