#include "tssl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tssl/netpbm.hpp"

namespace tssl::data {

namespace {

double luminance(const float c[3]) {
  return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
}

std::vector<float> dataset_mean(const std::vector<Sample>& samples) {
  std::vector<double> acc(3, 0.0);
  int64_t count = 0;
  for (const auto& s : samples) {
    const int plane = s.image.dim(1) * s.image.dim(2);
    const float* p = s.image.data().data();
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (int i = 0; i < plane; ++i) sum += p[static_cast<size_t>(c) * plane + i];
      acc[static_cast<size_t>(c)] += sum;
    }
    count += plane;
  }
  std::vector<float> mean(3, 0.5f);
  if (count > 0) {
    for (int c = 0; c < 3; ++c) {
      mean[static_cast<size_t>(c)] = static_cast<float>(acc[static_cast<size_t>(c)] /
                                                        static_cast<double>(count));
    }
  }
  return mean;
}

std::vector<size_t> indices_where(const std::vector<Sample>& samples, bool labelled_only) {
  std::vector<size_t> out;
  out.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    if (!labelled_only || samples[i].labelled) out.push_back(i);
  }
  return out;
}

}  // namespace

std::vector<size_t> Dataset::labelled_indices() const { return indices_where(samples, true); }
std::vector<size_t> Dataset::all_indices() const { return indices_where(samples, false); }

const Sample* Dataset::find(const std::string& id) const {
  for (const auto& s : samples) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

std::vector<size_t> TrainView::labelled_indices() const { return indices_where(samples, true); }
std::vector<size_t> TrainView::all_indices() const { return indices_where(samples, false); }

TrainView make_train_view(const Dataset& ds) {
  TrainView view;
  view.num_classes = ds.num_classes;
  view.height = ds.height;
  view.width = ds.width;
  view.mean_rgb = ds.mean_rgb;
  view.samples.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    Sample copy;
    copy.id = s.id;
    copy.image = s.image;
    copy.labelled = s.labelled;
    if (s.labelled) {
      TSSL_CHECK(s.gt.has_value(), "labelled sample '" << s.id << "' has no mask");
      copy.gt = s.gt;
    }
    view.samples.push_back(std::move(copy));
  }
  return view;
}

void validate_synth(const SynthConfig& cfg) {
  TSSL_CHECK_CODE(cfg.num_classes >= 2 && cfg.num_classes <= 255, "config",
                  "dataset.num_classes must be in [2,255], got " << cfg.num_classes);
  TSSL_CHECK_CODE(cfg.image_size >= 8, "config",
                  "dataset.image_size must be >= 8, got " << cfg.image_size);
  TSSL_CHECK_CODE(cfg.min_shapes >= 0 && cfg.max_shapes >= cfg.min_shapes, "config",
                  "dataset shape count range [" << cfg.min_shapes << "," << cfg.max_shapes
                                                << "] is invalid");
  TSSL_CHECK_CODE(cfg.noise_sigma >= 0.0f, "config", "dataset.noise_sigma must be >= 0");
  TSSL_CHECK_CODE(cfg.min_contrast >= 0.0f && cfg.min_contrast <= 0.45f, "config",
                  "dataset.min_contrast must be in [0,0.45], got " << cfg.min_contrast);
}

Sample synth_sample(const SynthConfig& cfg, uint64_t seed, uint64_t index,
                    const std::string& id) {
  validate_synth(cfg);
  Rng rng(mix_seed(seed, index));
  const int S = cfg.image_size;
  const size_t plane = static_cast<size_t>(S) * S;

  std::vector<float> img(3 * plane);
  engine::IntMask mask;
  mask.shape = {S, S};
  mask.v.assign(plane, 0);

  // Shaded backdrop: base color plus a low-amplitude luminance ramp.
  float base[3];
  for (auto& b : base) b = static_cast<float>(rng.uniform(0.2, 0.8));
  const double phi = rng.uniform(0.0, 6.283185307179586);
  const double amp = rng.uniform(0.0, 0.15);
  const double ux = std::cos(phi), uy = std::sin(phi);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double t = (static_cast<double>(x) / (S - 1) - 0.5) * ux +
                       (static_cast<double>(y) / (S - 1) - 0.5) * uy;
      for (int c = 0; c < 3; ++c) {
        img[static_cast<size_t>(c) * plane + static_cast<size_t>(y) * S + x] =
            static_cast<float>(base[c] + amp * t);
      }
    }
  }

  const int n_shapes =
      cfg.min_shapes +
      static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.max_shapes - cfg.min_shapes + 1)));
  for (int si = 0; si < n_shapes; ++si) {
    const int cls = 1 + static_cast<int>(rng.uniform_int(
                            static_cast<uint64_t>(cfg.num_classes - 1)));
    const int kind = (cls - 1) % 3;

    // Geometry. Extent ranges are chosen so the three kinds cover the same
    // expected pixel area; shapes stay fully inside the frame.
    double cx = 0, cy = 0, p0 = 0, p1 = 0;
    int orient = 0;
    if (kind == 0) {
      p0 = rng.uniform(0.08, 0.16) * S;  // radius
      cx = rng.uniform(p0 + 1.0, S - 2.0 - p0);
      cy = rng.uniform(p0 + 1.0, S - 2.0 - p0);
    } else if (kind == 1) {
      p0 = rng.uniform(0.07, 0.14) * S;  // half width
      p1 = rng.uniform(0.07, 0.14) * S;  // half height
      cx = rng.uniform(p0 + 1.0, S - 2.0 - p0);
      cy = rng.uniform(p1 + 1.0, S - 2.0 - p1);
    } else {
      p0 = rng.uniform(0.20, 0.40) * S;  // leg along x
      p1 = rng.uniform(0.20, 0.40) * S;  // leg along y
      cx = rng.uniform(1.0, S - 2.0 - p0);  // corner
      cy = rng.uniform(1.0, S - 2.0 - p1);
      orient = static_cast<int>(rng.uniform_int(4));
    }

    // Color: uniform, class-uninformative, but separated from the local
    // backdrop luminance so every shape is actually visible.
    const double tc = (cx / (S - 1) - 0.5) * ux + (cy / (S - 1) - 0.5) * uy;
    const double bg_lum = luminance(base) + amp * tc;
    float color[3];
    float best[3] = {0.5f, 0.5f, 0.5f};
    double best_gap = -1.0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (auto& c : color) c = static_cast<float>(rng.uniform(0.05, 0.95));
      const double gap = std::abs(luminance(color) - bg_lum);
      if (gap > best_gap) {
        best_gap = gap;
        std::copy(color, color + 3, best);
      }
      if (gap >= cfg.min_contrast) break;
    }
    std::copy(best, best + 3, color);

    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        bool inside = false;
        if (kind == 0) {
          const double dx = x - cx, dy = y - cy;
          inside = dx * dx + dy * dy <= p0 * p0;
        } else if (kind == 1) {
          inside = std::abs(x - cx) <= p0 && std::abs(y - cy) <= p1;
        } else {
          double u = (x - cx) / p0, v = (y - cy) / p1;
          if (orient & 1) u = 1.0 - u;
          if (orient & 2) v = 1.0 - v;
          inside = u >= 0.0 && v >= 0.0 && u + v <= 1.0;
        }
        if (!inside) continue;
        const size_t p = static_cast<size_t>(y) * S + x;
        mask.v[p] = cls;
        for (int c = 0; c < 3; ++c) img[static_cast<size_t>(c) * plane + p] = color[c];
      }
    }
  }

  // Per-pixel noise, clamp, and 8-bit quantization so that file round-trips
  // reproduce the tensor bit-for-bit.
  for (auto& v : img) {
    v = std::clamp(v + cfg.noise_sigma * static_cast<float>(rng.normal()), 0.0f, 1.0f);
    v = static_cast<float>(std::lround(static_cast<double>(v) * 255.0)) / 255.0f;
  }

  Sample s;
  s.id = id;
  s.image = engine::Tensor::from_data({3, S, S}, std::move(img), false);
  s.gt = std::move(mask);
  s.labelled = true;
  return s;
}

Dataset synth_dataset(const SynthConfig& cfg, uint64_t seed, int count,
                      const std::string& id_prefix, uint64_t lane) {
  validate_synth(cfg);
  TSSL_CHECK_CODE(count >= 1, "config", "dataset sample count must be >= 1, got " << count);
  Dataset ds;
  ds.num_classes = cfg.num_classes;
  ds.height = cfg.image_size;
  ds.width = cfg.image_size;
  ds.samples.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%06d", id_prefix.c_str(), i);
    ds.samples.push_back(
        synth_sample(cfg, seed, (lane << 32) | static_cast<uint64_t>(i), buf));
  }
  ds.mean_rgb = dataset_mean(ds.samples);
  return ds;
}

void apply_split(Dataset& ds, const SplitSpec& spec) {
  const size_t n = ds.samples.size();
  TSSL_CHECK_CODE(n > 0, "config", "cannot split an empty dataset");
  TSSL_CHECK_CODE(spec.fraction.has_value() != spec.count.has_value(), "config",
                  "split needs exactly one of labelled_fraction / labelled_count");
  size_t k = 0;
  if (spec.count) {
    TSSL_CHECK_CODE(*spec.count >= 1 && static_cast<size_t>(*spec.count) <= n, "config",
                    "split.labelled_count " << *spec.count << " out of range [1," << n << "]");
    k = static_cast<size_t>(*spec.count);
  } else {
    TSSL_CHECK_CODE(*spec.fraction > 0.0 && *spec.fraction <= 1.0, "config",
                    "split.labelled_fraction must be in (0,1], got " << *spec.fraction);
    k = static_cast<size_t>(std::lround(*spec.fraction * static_cast<double>(n)));
    TSSL_CHECK_CODE(k >= 1, "config", "split.labelled_fraction " << *spec.fraction
                                                                 << " selects zero samples");
  }

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  for (size_t i = n - 1; i > 0; --i) {
    const size_t j = rng.uniform_int(i + 1);
    std::swap(order[i], order[j]);
  }
  for (auto& s : ds.samples) s.labelled = false;
  for (size_t i = 0; i < k; ++i) ds.samples[order[i]].labelled = true;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "masks", ec);
  TSSL_CHECK_CODE(fs::is_directory(dir / "images") && fs::is_directory(dir / "masks"), "io",
                  "cannot create dataset directories under " << dir.string());

  std::ofstream split(dir / "split.txt", std::ios::trunc);
  TSSL_CHECK_CODE(split.good(), "io", "cannot write " << (dir / "split.txt").string());
  for (const auto& s : ds.samples) {
    netpbm::write_ppm(dir / "images" / (s.id + ".ppm"), s.image);
    if (s.gt) netpbm::write_pgm(dir / "masks" / (s.id + ".pgm"), *s.gt);
    split << s.id << " " << (s.labelled ? "L" : "U") << "\n";
  }
  split.flush();
  TSSL_CHECK_CODE(split.good(), "io", "failed writing " << (dir / "split.txt").string());
}

Dataset load_dataset(const std::filesystem::path& dir, int num_classes) {
  TSSL_CHECK_CODE(num_classes >= 2 && num_classes <= 255, "config",
                  "dataset.num_classes must be in [2,255], got " << num_classes);
  std::ifstream split(dir / "split.txt");
  TSSL_CHECK_CODE(split.good(), "io", "cannot open " << (dir / "split.txt").string());

  Dataset ds;
  ds.num_classes = num_classes;
  std::string line;
  size_t line_no = 0;
  while (std::getline(split, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, flag;
    ls >> id >> flag;
    TSSL_CHECK_CODE(!id.empty() && (flag == "L" || flag == "U"), "io",
                    (dir / "split.txt").string() << ":" << line_no
                                                 << ": expected '<id> L|U', got '" << line << "'");
    Sample s;
    s.id = id;
    s.labelled = flag == "L";
    const auto image_path = dir / "images" / (id + ".ppm");
    TSSL_CHECK_CODE(std::filesystem::exists(image_path), "io",
                    "missing image for id '" << id << "': " << image_path.string());
    s.image = netpbm::read_ppm(image_path);

    const auto mask_path = dir / "masks" / (id + ".pgm");
    if (std::filesystem::exists(mask_path)) {
      auto mask = netpbm::read_pgm(mask_path);
      TSSL_CHECK_CODE(mask.shape[0] == s.image.dim(1) && mask.shape[1] == s.image.dim(2), "io",
                      "mask/image size mismatch for id '" << id << "'");
      for (int32_t v : mask.v) {
        TSSL_CHECK_CODE(v == kIgnoreIndex || (v >= 0 && v < num_classes), "io",
                        "mask for id '" << id << "' contains label " << v
                                        << " outside [0," << num_classes << ")");
      }
      s.gt = std::move(mask);
    } else {
      TSSL_CHECK_CODE(!s.labelled, "io",
                      "labelled id '" << id << "' has no mask: " << mask_path.string());
    }

    if (ds.samples.empty()) {
      ds.height = s.image.dim(1);
      ds.width = s.image.dim(2);
    } else {
      TSSL_CHECK_CODE(s.image.dim(1) == ds.height && s.image.dim(2) == ds.width, "io",
                      "image size mismatch for id '" << id << "'");
    }
    ds.samples.push_back(std::move(s));
  }
  TSSL_CHECK_CODE(!ds.samples.empty(), "io",
                  "dataset at " << dir.string() << " lists no samples");
  ds.mean_rgb = dataset_mean(ds.samples);
  return ds;
}

BatchSampler::BatchSampler(std::vector<size_t> all, std::vector<size_t> labelled, uint64_t seed)
    : rng_(seed) {
  all_.pool = std::move(all);
  labelled_.pool = std::move(labelled);
  all_.pos = all_.pool.size();        // force shuffle on first draw
  labelled_.pos = labelled_.pool.size();
}

size_t BatchSampler::take(Walker& w) {
  if (w.pos >= w.pool.size()) {
    for (size_t i = w.pool.size() - 1; i > 0; --i) {
      const size_t j = rng_.uniform_int(i + 1);
      std::swap(w.pool[i], w.pool[j]);
    }
    w.pos = 0;
  }
  return w.pool[w.pos++];
}

BatchSampler::Draw BatchSampler::next(int b1, int b2) {
  TSSL_CHECK(b1 >= 0 && b2 >= 0 && b1 + b2 >= 1,
             "batch sizes must be non-negative and sum to >= 1, got " << b1 << "+" << b2);
  TSSL_CHECK(b1 == 0 || !all_.pool.empty(), "sub-batch 1 requested but the sample pool is empty");
  TSSL_CHECK(b2 == 0 || !labelled_.pool.empty(),
             "sub-batch 2 requested but the labelled pool is empty");
  Draw d;
  d.sub1.reserve(static_cast<size_t>(b1));
  d.sub2.reserve(static_cast<size_t>(b2));
  for (int i = 0; i < b1; ++i) d.sub1.push_back(take(all_));
  for (int i = 0; i < b2; ++i) d.sub2.push_back(take(labelled_));
  return d;
}

}  // namespace tssl::data
