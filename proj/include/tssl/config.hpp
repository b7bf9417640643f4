#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "tssl/augment.hpp"
#include "tssl/data.hpp"
#include "tssl/net.hpp"
#include "tssl/trainer.hpp"

namespace tssl::config {

// Plain-text run configuration: "[section]" headers and "key = value" lines,
// full-line '#' comments. The schema is closed: unknown sections, unknown
// keys, duplicate keys and malformed values are errors naming the offending
// "section.key". [train] holds the stage defaults; [stage1]..[stage3]
// override individual keys per stage.

struct DatasetSection {
  std::string path = "data/shapes";
  int num_classes = 4;
  int image_size = 64;
  int train_count = 600;
  int val_count = 100;
  int min_shapes = 1;
  int max_shapes = 3;
  float noise_sigma = 0.05f;
  float min_contrast = 0.25f;
  uint64_t seed = 1;
};

struct SplitSection {
  std::optional<double> labelled_fraction = 0.05;
  std::optional<int> labelled_count;
  uint64_t seed = 7;
};

struct ArchSection {
  int input_channels = 3;
  std::vector<int> trunk_widths = {16, 32, 32, 64, 64};
  int first_stride = 2;
};

struct AugmentSection {
  augment::PolicyConfig policy;
  bool weak_flip = true;
};

struct TrainSection {
  trainer::StageSettings stage[3];  // resolved per-stage settings
  bool soft_consistency = true;
};

struct RunSection {
  uint64_t seed = 1;
  std::string out = "runs/exp";
  int threads = 0;
};

struct FullConfig {
  DatasetSection dataset;
  SplitSection split;
  ArchSection arch;
  AugmentSection augment;
  TrainSection train;
  RunSection run;
  trainer::TrainerSwitches switches;  // CLI --ablate lands here

  data::SynthConfig synth_config() const;
  data::SplitSpec split_spec() const;
  net::NetConfig net_config() const;
  trainer::PipelineSettings pipeline_settings() const;

  void validate() const;
  // Canonical dump of every resolved value, used for config_resolved.txt and
  // for change detection; identical configs produce identical bytes.
  void write_snapshot(std::ostream& os) const;
  std::string snapshot() const;
};

FullConfig default_config();
FullConfig parse_config_text(const std::string& text, const std::string& origin);
FullConfig load_config(const std::filesystem::path& path);

}  // namespace tssl::config
