#pragma once

#include <filesystem>
#include <fstream>
#include <memory>

#include "tssl/data.hpp"
#include "tssl/eval.hpp"
#include "tssl/loss.hpp"
#include "tssl/net.hpp"
#include "tssl/pseudo.hpp"

namespace tssl::trainer {

struct StageSettings {
  int steps = 2000;
  int b1 = 4;  // sub-batch from labelled+unlabelled (stages 2/3 only)
  int b2 = 4;  // sub-batch from labelled
  engine::AdamConfig adam;
  loss::LossWeights weights;
  float ema_alpha = 0.99f;
  int eval_every = 200;
};

void validate_stage_settings(const StageSettings& s);

// Method switches (all on for the full method). Each one removes exactly one
// ingredient: the consistency term, the auxiliary pseudo-label task, strong
// augmentation (specs collapse to the identity), the deeper trunk sharing of
// the third stage, or the EMA teacher (the teacher then tracks the student).
struct TrainerSwitches {
  bool consistency = true;
  bool aux_task = true;
  bool strong_aug = true;
  bool deep_share = true;
  bool ema = true;
};

struct StageSetup {
  int stage = 1;
  StageSettings settings;
  TrainerSwitches switches;
  bool soft_target = true;
  bool weak_flip = true;
  augment::PolicyConfig policy;
  net::NetConfig arch;
  uint64_t run_seed = 0;
  std::filesystem::path stage_dir;   // checkpoints land here
  double store_quality = -1.0;       // caller-scored quality of the input store
};

// Appends rows "step,stage,loss_seg,loss_con,loss_pl,val_miou,pseudo_miou".
// Numeric formatting is fixed and no wall-clock data enters the file, so
// identical runs produce byte-identical metrics.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, bool truncate);
  void row(int64_t step, int stage, double seg, double con, double pl, double val_miou,
           double pseudo_miou);

 private:
  std::ofstream os_;
};

struct MetricsRow {
  int64_t step = 0;
  int stage = 0;
  double loss_seg = 0, loss_con = 0, loss_pl = 0;
  double val_miou = 0, pseudo_miou = 0;
};

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct StageResult {
  std::shared_ptr<net::MultiTaskNet> net;
  std::filesystem::path ckpt;
  double final_val_miou = 0.0;
  double pseudo_quality_in = -1.0;  // mIoU of the consumed store, -1 if none
  int64_t wall_ms = 0;
};

// Trains one stage from a fresh initialization. Stages 2 and 3 require a
// complete pseudo-mask store when the auxiliary task is enabled.
StageResult run_stage(const StageSetup& setup, const data::TrainView& train,
                      const data::Dataset& val, const PseudoMaskStore* store,
                      MetricsWriter& metrics);

// Argmax predictions of the student over every training sample.
PseudoMaskStore generate_store(const net::MultiTaskNet& net, const data::TrainView& train,
                               const std::string& tag, const std::string& checkpoint_hex);

// Store accuracy against the hidden ground truth (mean IoU over samples that
// carry it).
double pseudo_quality(const PseudoMaskStore& store, const data::Dataset& train_full);

eval::MiouReport evaluate_student(const net::MultiTaskNet& net, const data::Dataset& ds);
eval::MiouReport evaluate_params(const engine::ParamSet& student_like,
                                 const net::NetConfig& arch, const data::Dataset& ds);

struct PipelineSettings {
  StageSettings stages[3];
  TrainerSwitches switches;
  bool soft_target = true;
  bool weak_flip = true;
  augment::PolicyConfig policy;
  net::NetConfig arch;
  uint64_t seed = 0;
  std::filesystem::path out;
};

struct StageSummary {
  int stage = 0;
  double val_miou = 0.0;
  double pseudo_quality_in = -1.0;   // store the stage consumed
  double pseudo_quality_out = -1.0;  // store the stage produced
  int64_t wall_ms = 0;
};

struct PipelineResult {
  std::vector<StageSummary> stages;
};

// The full three-stage run: train, harvest pseudo-masks, retrain, repeat.
// Writes metrics.csv, summary.csv, per-stage checkpoints and stores under
// `out`. Stage-wise CLI invocations reproduce this byte for byte.
PipelineResult run_pipeline(const PipelineSettings& settings, const data::Dataset& train_full,
                            const data::Dataset& val);

void write_summary_csv(const std::filesystem::path& path, const PipelineResult& result);
std::vector<StageSummary> read_summary_csv(const std::filesystem::path& path);

}  // namespace tssl::trainer
