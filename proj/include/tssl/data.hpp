#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tssl/engine/tensor.hpp"

namespace tssl::data {

// 255 is reserved in masks for "no label here"; class ids must stay below it.
inline constexpr int kIgnoreIndex = 255;

struct Sample {
  std::string id;
  engine::Tensor image;                // [3,H,W], values k/255
  std::optional<engine::IntMask> gt;   // ground truth when known
  bool labelled = false;               // whether the trainer may see gt
};

// A loaded dataset. Ground truth of unlabelled samples (when present) is the
// hidden evaluation channel: it never reaches the trainer, which only sees
// the stripped TrainView below.
struct Dataset {
  int num_classes = 0;
  int height = 0, width = 0;
  std::vector<float> mean_rgb;  // per-channel mean over all images
  std::vector<Sample> samples;

  std::vector<size_t> labelled_indices() const;
  std::vector<size_t> all_indices() const;
  const Sample* find(const std::string& id) const;
};

// What the trainer is allowed to see: unlabelled samples have gt removed.
struct TrainView {
  int num_classes = 0;
  int height = 0, width = 0;
  std::vector<float> mean_rgb;
  std::vector<Sample> samples;

  std::vector<size_t> labelled_indices() const;
  std::vector<size_t> all_indices() const;
};

TrainView make_train_view(const Dataset& ds);

// Synthetic scenes: 1-3 random shapes (disk / axis-aligned rectangle /
// right triangle, one geometry per foreground class) over a noisy shaded
// background. Shape colors are uniform and carry no class signal; expected
// pixel area is matched across the three geometries. Sample i depends only
// on (seed, i).
struct SynthConfig {
  int num_classes = 4;
  int image_size = 64;
  int min_shapes = 1;
  int max_shapes = 3;
  float noise_sigma = 0.05f;
  float min_contrast = 0.25f;  // luminance gap between shape and backdrop
};

void validate_synth(const SynthConfig& cfg);
Sample synth_sample(const SynthConfig& cfg, uint64_t seed, uint64_t index,
                    const std::string& id);
Dataset synth_dataset(const SynthConfig& cfg, uint64_t seed, int count,
                      const std::string& id_prefix, uint64_t lane);

// Labelled/unlabelled split over a dataset's samples: a seeded shuffle marks
// the first k as labelled. Exactly one of fraction/count must be set.
struct SplitSpec {
  std::optional<double> fraction;
  std::optional<int> count;
  uint64_t seed = 0;
};

void apply_split(Dataset& ds, const SplitSpec& spec);

// Directory layout: images/<id>.ppm, masks/<id>.pgm, split.txt with one
// "<id> L|U" line per sample in order. Round-trips are byte-exact.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir, int num_classes);

// Epochless uniform sampler: two independently shuffled walkers, one over
// all samples (sub-batch 1) and one over the labelled pool (sub-batch 2).
class BatchSampler {
 public:
  BatchSampler(std::vector<size_t> all, std::vector<size_t> labelled, uint64_t seed);

  struct Draw {
    std::vector<size_t> sub1;  // indices into the dataset's sample vector
    std::vector<size_t> sub2;
  };
  Draw next(int b1, int b2);

 private:
  struct Walker {
    std::vector<size_t> pool;
    size_t pos = 0;
  };
  size_t take(Walker& w);

  Walker all_, labelled_;
  Rng rng_;
};

}  // namespace tssl::data
