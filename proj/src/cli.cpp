#include "tssl/cli.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tssl/config.hpp"
#include "tssl/engine/checkpoint.hpp"
#include "tssl/plot.hpp"
#include "tssl/trainer.hpp"

namespace tssl::cli {
namespace {

namespace fs = std::filesystem;

int exit_code_for(const std::string& code) {
  if (code == "config") return 2;
  if (code == "io") return 3;
  if (code == "invalid") return 4;
  if (code == "sequencing") return 5;
  return 6;  // internal
}

// One line on stderr, no embedded newlines, so scripts can match on it.
int report_error(const std::string& code, std::string msg) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "error[%s]: %s\n", code.c_str(), msg.c_str());
  return exit_code_for(code);
}

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::vector<std::string> ablate;
};

void add_config_flag(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file");
}

config::FullConfig resolve_config(const CommonArgs& args) {
  config::FullConfig cfg =
      args.config_path.empty() ? config::default_config() : config::load_config(args.config_path);
  if (args.seed_set) cfg.run.seed = args.seed;
  if (!args.out.empty()) cfg.run.out = args.out;
  for (const std::string& a : args.ablate) {
    if (a == "cr")
      cfg.switches.consistency = false;
    else if (a == "t2")
      cfg.switches.aux_task = false;
    else if (a == "sa")
      cfg.switches.strong_aug = false;
    else if (a == "n2")
      cfg.switches.deep_share = false;
    else if (a == "ema")
      cfg.switches.ema = false;
    else
      throw Error("config", "unknown ablation '" + a + "' (expected cr, t2, sa, n2 or ema)");
  }
  cfg.validate();
  return cfg;
}

void write_snapshot_file(const config::FullConfig& cfg, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  TSSL_CHECK_CODE(fs::is_directory(dir), "io", "cannot create directory " << dir.string());
  const fs::path path = dir / "config_resolved.txt";
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  TSSL_CHECK_CODE(os.good(), "io", "cannot write " << path.string());
  cfg.write_snapshot(os);
  os.flush();
  TSSL_CHECK_CODE(os.good(), "io", "failed writing " << path.string());
}

data::Dataset load_split_dir(const config::FullConfig& cfg, const char* which) {
  const fs::path dir = fs::path(cfg.dataset.path) / which;
  TSSL_CHECK_CODE(fs::is_directory(dir), "io",
                  "dataset directory " << dir.string() << " not found (run `synth` first)");
  return data::load_dataset(dir, cfg.dataset.num_classes);
}

int cmd_synth(const CommonArgs& args) {
  const config::FullConfig cfg = resolve_config(args);
  const data::SynthConfig synth = cfg.synth_config();
  const fs::path root = cfg.dataset.path;

  data::Dataset train = data::synth_dataset(synth, cfg.dataset.seed, cfg.dataset.train_count,
                                            "t", /*lane=*/0);
  data::apply_split(train, cfg.split_spec());
  data::save_dataset(root / "train", train);

  data::Dataset val =
      data::synth_dataset(synth, cfg.dataset.seed, cfg.dataset.val_count, "v", /*lane=*/1);
  for (auto& s : val.samples) s.labelled = true;  // evaluation set keeps its truth visible
  data::save_dataset(root / "val", val);

  write_snapshot_file(cfg, root);
  const size_t labelled = train.labelled_indices().size();
  std::printf("synth: %d train (%zu labelled) + %d val samples under %s\n",
              cfg.dataset.train_count, labelled, cfg.dataset.val_count, root.string().c_str());
  return 0;
}

trainer::PipelineSettings pipeline_from(const config::FullConfig& cfg) {
  trainer::PipelineSettings p = cfg.pipeline_settings();
  p.out = cfg.run.out;
  return p;
}

void print_stage_summary(const trainer::StageSummary& s) {
  std::printf("stage %d: val_miou=%.6f", s.stage, s.val_miou);
  if (s.pseudo_quality_in >= 0.0) std::printf(" pseudo_in=%.6f", s.pseudo_quality_in);
  if (s.pseudo_quality_out >= 0.0) std::printf(" pseudo_out=%.6f", s.pseudo_quality_out);
  std::printf(" wall_ms=%" PRId64 "\n", s.wall_ms);
}

// One stage in isolation, byte-compatible with the uninterrupted pipeline:
// stage N consumes stage N-1's saved store, appends to metrics.csv and
// rewrites summary.csv with its row added.
trainer::StageSummary run_stage_command(const config::FullConfig& cfg, int stage,
                                        const data::Dataset& train_full,
                                        const data::Dataset& val) {
  const trainer::PipelineSettings settings = pipeline_from(cfg);
  const data::TrainView view = data::make_train_view(train_full);
  const fs::path out = settings.out;

  std::vector<trainer::StageSummary> prior;
  if (stage > 1) {
    const fs::path summary_path = out / "summary.csv";
    TSSL_CHECK_CODE(fs::exists(summary_path), "sequencing",
                    "no " << summary_path.string() << "; run the earlier stages first");
    prior = trainer::read_summary_csv(summary_path);
    TSSL_CHECK_CODE(static_cast<int>(prior.size()) == stage - 1, "sequencing",
                    out.string() << "/summary.csv has " << prior.size()
                                 << " stage rows; expected " << (stage - 1)
                                 << " before running stage " << stage);
    for (int i = 0; i < stage - 1; ++i)
      TSSL_CHECK_CODE(prior[i].stage == i + 1, "sequencing",
                      "summary.csv row " << i << " is for stage " << prior[i].stage);
  }

  trainer::PseudoMaskStore store;
  double quality_in = -1.0;
  if (stage >= 2) {
    store = trainer::PseudoMaskStore::load(out / ("stage" + std::to_string(stage - 1)) /
                                           "pseudo");
    store.require_complete(view);
    quality_in = trainer::pseudo_quality(store, train_full);
  }

  trainer::MetricsWriter metrics(out / "metrics.csv", /*truncate=*/stage == 1);

  trainer::StageSetup setup;
  setup.stage = stage;
  setup.settings = settings.stages[stage - 1];
  setup.switches = settings.switches;
  setup.soft_target = settings.soft_target;
  setup.weak_flip = settings.weak_flip;
  setup.policy = settings.policy;
  setup.arch = settings.arch;
  setup.run_seed = settings.seed;
  setup.stage_dir = out / ("stage" + std::to_string(stage));
  setup.store_quality = quality_in;

  trainer::StageResult sr =
      trainer::run_stage(setup, view, val, stage >= 2 ? &store : nullptr, metrics);

  trainer::StageSummary summary;
  summary.stage = stage;
  summary.val_miou = sr.final_val_miou;
  summary.pseudo_quality_in = quality_in;
  summary.wall_ms = sr.wall_ms;
  if (stage < 3) {
    trainer::PseudoMaskStore produced =
        trainer::generate_store(*sr.net, view, "stage" + std::to_string(stage),
                                hex64(engine::file_fingerprint(sr.ckpt)));
    produced.save(setup.stage_dir / "pseudo");
    summary.pseudo_quality_out = trainer::pseudo_quality(produced, train_full);
  }

  trainer::PipelineResult all;
  all.stages = std::move(prior);
  all.stages.push_back(summary);
  trainer::write_summary_csv(out / "summary.csv", all);
  return summary;
}

int cmd_train(const CommonArgs& args, const std::string& stage_arg) {
  TSSL_CHECK_CODE(
      stage_arg == "all" || stage_arg == "1" || stage_arg == "2" || stage_arg == "3", "config",
      "--stage must be 1, 2, 3 or all (got '" << stage_arg << "')");
  const config::FullConfig cfg = resolve_config(args);
  const data::Dataset train_full = load_split_dir(cfg, "train");
  const data::Dataset val = load_split_dir(cfg, "val");
  write_snapshot_file(cfg, cfg.run.out);

  if (stage_arg == "all") {
    const trainer::PipelineResult result =
        trainer::run_pipeline(pipeline_from(cfg), train_full, val);
    for (const auto& s : result.stages) print_stage_summary(s);
    return 0;
  }
  const int stage = stage_arg[0] - '0';
  print_stage_summary(run_stage_command(cfg, stage, train_full, val));
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt) {
  const config::FullConfig cfg = resolve_config(args);
  TSSL_CHECK_CODE(fs::exists(ckpt), "io", "checkpoint " << ckpt << " not found");
  const data::Dataset val = load_split_dir(cfg, "val");
  const engine::ParamSet params = engine::load_checkpoint(ckpt);
  const eval::MiouReport report = trainer::evaluate_params(params, cfg.net_config(), val);

  write_snapshot_file(cfg, cfg.run.out);
  const fs::path csv_path = fs::path(cfg.run.out) / "class_iou.csv";
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  TSSL_CHECK_CODE(csv.good(), "io", "cannot write " << csv_path.string());
  csv << "class,iou\n";
  for (const auto& c : report.per_class) {
    if (!c.present) continue;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d,%.6f\n", c.cls, c.iou);
    csv << buf;
  }
  csv.flush();
  TSSL_CHECK_CODE(csv.good(), "io", "failed writing " << csv_path.string());

  std::printf("checkpoint: %s\n", ckpt.c_str());
  for (const auto& c : report.per_class) {
    if (c.present)
      std::printf("class %d: iou=%.6f\n", c.cls, c.iou);
    else
      std::printf("class %d: absent\n", c.cls);
  }
  std::printf("miou: %.6f over %d present classes\n", report.miou, report.present_classes);
  std::printf("per-class csv: %s\n", csv_path.string().c_str());
  return 0;
}

int cmd_pseudo(const CommonArgs& args, const std::string& ckpt, const std::string& out_dir,
               const std::string& tag) {
  const config::FullConfig cfg = resolve_config(args);
  TSSL_CHECK_CODE(fs::exists(ckpt), "io", "checkpoint " << ckpt << " not found");
  TSSL_CHECK_CODE(!out_dir.empty(), "config", "--out is required");
  const data::Dataset train_full = load_split_dir(cfg, "train");
  const data::TrainView view = data::make_train_view(train_full);

  net::MultiTaskNet model(cfg.net_config(), net::AuxKind::none, 0);
  model.load_student_params(engine::load_checkpoint(ckpt));
  trainer::PseudoMaskStore store = trainer::generate_store(
      model, view, tag, hex64(engine::file_fingerprint(ckpt)));
  store.save(out_dir);
  write_snapshot_file(cfg, out_dir);
  std::printf("pseudo: wrote %zu masks (tag '%s') under %s\n", store.size(), tag.c_str(),
              out_dir.c_str());
  return 0;
}

int cmd_plot(const std::string& metrics_path, const std::string& out_path) {
  const std::vector<trainer::MetricsRow> rows = trainer::read_metrics_csv(metrics_path);
  TSSL_CHECK_CODE(!rows.empty(), "invalid", metrics_path << " has no data rows");

  plot::Series seg{"loss_seg", "#d62728", {}};
  plot::Series con{"loss_con", "#ff7f0e", {}};
  plot::Series pl{"loss_pl", "#9467bd", {}};
  plot::Series miou{"val_miou", "#1f77b4", {}};
  plot::Series pq{"pseudo_quality", "#2ca02c", {}};
  for (const auto& r : rows) {
    const double step = static_cast<double>(r.step);
    seg.points.emplace_back(step, r.loss_seg);
    con.points.emplace_back(step, r.loss_con);
    pl.points.emplace_back(step, r.loss_pl);
    miou.points.emplace_back(step, r.val_miou);
    if (r.pseudo_miou >= 0.0) pq.points.emplace_back(step, r.pseudo_miou);
  }
  std::vector<plot::Series> series = {seg, con, pl, miou};
  if (!pq.points.empty()) series.push_back(pq);

  plot::ChartOptions opt;
  opt.title = "training curves";
  opt.x_label = "step";
  opt.y_label = "loss / mIoU";
  plot::write_line_chart(out_path, series, opt);
  std::printf("plot: wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"three-stage self-training for semantic segmentation"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string stage_arg = "all";
  std::string ckpt, pseudo_out, tag = "cli", metrics_path, plot_out;

  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  add_config_flag(synth, args);

  CLI::App* train = app.add_subcommand("train", "train one stage or the full pipeline");
  add_config_flag(train, args);
  train->add_option("--stage", stage_arg, "1, 2, 3 or all")->default_str("all");
  train->add_option("--seed", args.seed, "override run seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  train->add_option("--out", args.out, "override output directory");
  train->add_option("--ablate", args.ablate, "disable an ingredient: cr, t2, sa, n2, ema")
      ->allow_extra_args(false);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the val split");
  add_config_flag(eval_cmd, args);
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--out", args.out, "override output directory");

  CLI::App* pseudo = app.add_subcommand("pseudo", "export pseudo-masks from a checkpoint");
  add_config_flag(pseudo, args);
  pseudo->add_option("--ckpt", ckpt, "checkpoint file")->required();
  pseudo->add_option("--out", pseudo_out, "store output directory")->required();
  pseudo->add_option("--tag", tag, "store tag");

  CLI::App* plot_cmd = app.add_subcommand("plot", "render metrics.csv as an SVG chart");
  plot_cmd->add_option("--metrics", metrics_path, "metrics csv")->required();
  plot_cmd->add_option("--out", plot_out, "output svg")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n' || c == '\r') c = ' ';
    std::fprintf(stderr, "error[config]: %s\n", msg.c_str());
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(args);
    if (train->parsed()) return cmd_train(args, stage_arg);
    if (eval_cmd->parsed()) return cmd_eval(args, ckpt);
    if (pseudo->parsed()) return cmd_pseudo(args, ckpt, pseudo_out, tag);
    if (plot_cmd->parsed()) return cmd_plot(metrics_path, plot_out);
    return report_error("internal", "no subcommand dispatched");
  } catch (const Error& e) {
    return report_error(e.code(), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
}

}  // namespace tssl::cli
