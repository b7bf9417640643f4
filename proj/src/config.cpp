#include "tssl/config.hpp"

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace tssl::config {
namespace {

struct RawEntry {
  std::string value;
  int line = 0;
};

using Section = std::map<std::string, RawEntry>;
using RawConfig = std::map<std::string, Section>;

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw Error("config", origin + ":" + std::to_string(line) + ": " + msg);
}

RawConfig parse_raw(const std::string& text, const std::string& origin) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        fail(origin, line_no, "malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) fail(origin, line_no, "empty section name");
      raw[section];  // remember even if empty
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail(origin, line_no, "expected 'key = value', got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) fail(origin, line_no, "empty key");
    if (section.empty()) fail(origin, line_no, "key '" + key + "' outside any section");
    auto [it, inserted] = raw[section].emplace(key, RawEntry{value, line_no});
    if (!inserted)
      fail(origin, line_no,
           "duplicate key '" + section + "." + key + "' (first at line " +
               std::to_string(it->second.line) + ")");
  }
  return raw;
}

// Typed accessors over one section. Every fetched key is crossed off; leftover
// keys at the end are unknown-key errors.
class SectionReader {
 public:
  SectionReader(const std::string& origin, const std::string& name, Section* sec)
      : origin_(origin), name_(name), sec_(sec) {}

  bool has(const std::string& key) const { return sec_ && sec_->count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const RawEntry* e = take(key);
    if (!e) return fallback;
    if (e->value.empty()) fail(origin_, e->line, qual(key) + ": empty value");
    return e->value;
  }

  bool get_bool(const std::string& key, bool fallback) {
    const RawEntry* e = take(key);
    if (!e) return fallback;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    fail(origin_, e->line, qual(key) + ": expected 'true' or 'false', got '" + e->value + "'");
  }

  int get_int(const std::string& key, int fallback) {
    const RawEntry* e = take(key);
    if (!e) return fallback;
    return parse_int(key, *e);
  }

  uint64_t get_u64(const std::string& key, uint64_t fallback) {
    const RawEntry* e = take(key);
    if (!e) return fallback;
    try {
      // stoull accepts a leading minus and wraps; reject it up front.
      if (e->value.empty() || !std::isdigit(static_cast<unsigned char>(e->value[0])))
        throw std::invalid_argument("sign");
      size_t pos = 0;
      const uint64_t v = std::stoull(e->value, &pos);
      if (pos != e->value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      fail(origin_, e->line, qual(key) + ": expected unsigned integer, got '" + e->value + "'");
    }
  }

  double get_double(const std::string& key, double fallback) {
    const RawEntry* e = take(key);
    if (!e) return fallback;
    return parse_double(key, *e);
  }

  float get_float(const std::string& key, float fallback) {
    return static_cast<float>(get_double(key, fallback));
  }

  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) {
    const RawEntry* e = take(key);
    if (!e) return fallback;
    std::vector<int> out;
    std::string item;
    std::istringstream in(e->value);
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (item.empty())
        fail(origin_, e->line, qual(key) + ": empty element in list '" + e->value + "'");
      out.push_back(parse_int(key, RawEntry{item, e->line}));
    }
    if (out.empty()) fail(origin_, e->line, qual(key) + ": empty list");
    return out;
  }

  // Call after all gets: any key still present was never asked for.
  void finish() {
    if (!sec_) return;
    for (const auto& [key, entry] : *sec_)
      fail(origin_, entry.line, "unknown key '" + name_ + "." + key + "'");
  }

 private:
  const RawEntry* take(const std::string& key) {
    if (!sec_) return nullptr;
    auto it = sec_->find(key);
    if (it == sec_->end()) return nullptr;
    stash_ = it->second;
    sec_->erase(it);
    return &stash_;
  }

  int parse_int(const std::string& key, const RawEntry& e) {
    try {
      size_t pos = 0;
      const long v = std::stol(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument("trailing");
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw std::out_of_range("int");
      return static_cast<int>(v);
    } catch (const std::exception&) {
      fail(origin_, e.line, qual(key) + ": expected integer, got '" + e.value + "'");
    }
  }

  double parse_double(const std::string& key, const RawEntry& e) {
    try {
      size_t pos = 0;
      const double v = std::stod(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      fail(origin_, e.line, qual(key) + ": expected number, got '" + e.value + "'");
    }
  }

  std::string qual(const std::string& key) const { return "'" + name_ + "." + key + "'"; }

  std::string origin_;
  std::string name_;
  Section* sec_;
  RawEntry stash_;
};

void apply_stage_keys(SectionReader& r, trainer::StageSettings& s) {
  s.steps = r.get_int("steps", s.steps);
  s.b1 = r.get_int("batch_mixed", s.b1);
  s.b2 = r.get_int("batch_labelled", s.b2);
  s.adam.lr = r.get_float("lr", s.adam.lr);
  s.adam.beta1 = r.get_float("beta1", s.adam.beta1);
  s.adam.beta2 = r.get_float("beta2", s.adam.beta2);
  s.adam.eps = r.get_float("eps", s.adam.eps);
  s.weights.lambda1 = r.get_float("lambda_consistency", s.weights.lambda1);
  s.weights.lambda2 = r.get_float("lambda_pseudo", s.weights.lambda2);
  s.ema_alpha = r.get_float("ema_alpha", s.ema_alpha);
  s.eval_every = r.get_int("eval_every", s.eval_every);
}

std::string fmt_f(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

data::SynthConfig FullConfig::synth_config() const {
  data::SynthConfig c;
  c.num_classes = dataset.num_classes;
  c.image_size = dataset.image_size;
  c.min_shapes = dataset.min_shapes;
  c.max_shapes = dataset.max_shapes;
  c.noise_sigma = dataset.noise_sigma;
  c.min_contrast = dataset.min_contrast;
  return c;
}

data::SplitSpec FullConfig::split_spec() const {
  data::SplitSpec s;
  s.fraction = split.labelled_fraction;
  s.count = split.labelled_count;
  s.seed = split.seed;
  return s;
}

net::NetConfig FullConfig::net_config() const {
  net::NetConfig c;
  c.in_channels = arch.input_channels;
  c.num_classes = dataset.num_classes;
  c.trunk.clear();
  for (size_t i = 0; i < arch.trunk_widths.size(); ++i) {
    net::ConvSpec spec;
    spec.out_ch = arch.trunk_widths[i];
    spec.stride = (i == 0) ? arch.first_stride : 1;
    c.trunk.push_back(spec);
  }
  return c;
}

trainer::PipelineSettings FullConfig::pipeline_settings() const {
  trainer::PipelineSettings p;
  for (int s = 0; s < 3; ++s) p.stages[s] = train.stage[s];
  p.switches = switches;
  p.soft_target = train.soft_consistency;
  p.weak_flip = augment.weak_flip;
  p.policy = augment.policy;
  p.arch = net_config();
  p.seed = run.seed;
  p.out = run.out;
  return p;
}

void FullConfig::validate() const {
  data::validate_synth(synth_config());
  TSSL_CHECK_CODE(dataset.train_count > 0 && dataset.val_count > 0, "config",
                  "dataset.train_count and dataset.val_count must be positive");
  TSSL_CHECK_CODE(!dataset.path.empty(), "config", "dataset.path must not be empty");
  TSSL_CHECK_CODE(split.labelled_fraction.has_value() != split.labelled_count.has_value(),
                  "config",
                  "exactly one of split.labelled_fraction / split.labelled_count must be set");
  if (split.labelled_fraction)
    TSSL_CHECK_CODE(*split.labelled_fraction > 0.0 && *split.labelled_fraction <= 1.0, "config",
                    "split.labelled_fraction must be in (0, 1]");
  if (split.labelled_count)
    TSSL_CHECK_CODE(*split.labelled_count > 0, "config", "split.labelled_count must be positive");
  net::validate_net(net_config());
  TSSL_CHECK_CODE(arch.first_stride >= 1, "config", "arch.first_stride must be >= 1");
  augment::validate_policy(augment.policy);
  for (int s = 0; s < 3; ++s) trainer::validate_stage_settings(train.stage[s]);
  TSSL_CHECK_CODE(run.threads >= 0, "config", "run.threads must be >= 0");
  TSSL_CHECK_CODE(!run.out.empty(), "config", "run.out must not be empty");
}

void FullConfig::write_snapshot(std::ostream& os) const {
  os << "[dataset]\n";
  os << "path = " << dataset.path << "\n";
  os << "num_classes = " << dataset.num_classes << "\n";
  os << "image_size = " << dataset.image_size << "\n";
  os << "train_count = " << dataset.train_count << "\n";
  os << "val_count = " << dataset.val_count << "\n";
  os << "min_shapes = " << dataset.min_shapes << "\n";
  os << "max_shapes = " << dataset.max_shapes << "\n";
  os << "noise_sigma = " << fmt_f(dataset.noise_sigma) << "\n";
  os << "min_contrast = " << fmt_f(dataset.min_contrast) << "\n";
  os << "seed = " << dataset.seed << "\n";
  os << "\n[split]\n";
  if (split.labelled_fraction)
    os << "labelled_fraction = " << fmt_f(*split.labelled_fraction) << "\n";
  if (split.labelled_count) os << "labelled_count = " << *split.labelled_count << "\n";
  os << "seed = " << split.seed << "\n";
  os << "\n[arch]\n";
  os << "input_channels = " << arch.input_channels << "\n";
  os << "trunk_widths = ";
  for (size_t i = 0; i < arch.trunk_widths.size(); ++i)
    os << (i ? "," : "") << arch.trunk_widths[i];
  os << "\n";
  os << "first_stride = " << arch.first_stride << "\n";
  os << "\n[augment]\n";
  const augment::PolicyConfig& p = augment.policy;
  os << "n_ops = " << p.n_ops << "\n";
  os << "flip_p = " << fmt_f(p.flip_p) << "\n";
  os << "translate_p = " << fmt_f(p.translate_p) << "\n";
  os << "translate_frac = " << fmt_f(p.translate_frac) << "\n";
  os << "scale_p = " << fmt_f(p.scale_p) << "\n";
  os << "scale_min = " << fmt_f(p.scale_min) << "\n";
  os << "scale_max = " << fmt_f(p.scale_max) << "\n";
  os << "brightness_p = " << fmt_f(p.brightness_p) << "\n";
  os << "brightness_max = " << fmt_f(p.brightness_max) << "\n";
  os << "contrast_p = " << fmt_f(p.contrast_p) << "\n";
  os << "contrast_min = " << fmt_f(p.contrast_min) << "\n";
  os << "contrast_max = " << fmt_f(p.contrast_max) << "\n";
  os << "cut_p = " << fmt_f(p.cut_p) << "\n";
  os << "cut_min_frac = " << fmt_f(p.cut_min_frac) << "\n";
  os << "cut_max_frac = " << fmt_f(p.cut_max_frac) << "\n";
  os << "weak_flip = " << (augment.weak_flip ? "true" : "false") << "\n";
  for (int s = 0; s < 3; ++s) {
    const trainer::StageSettings& st = train.stage[s];
    os << "\n[stage" << (s + 1) << "]\n";
    os << "steps = " << st.steps << "\n";
    os << "batch_mixed = " << st.b1 << "\n";
    os << "batch_labelled = " << st.b2 << "\n";
    os << "lr = " << fmt_f(st.adam.lr) << "\n";
    os << "beta1 = " << fmt_f(st.adam.beta1) << "\n";
    os << "beta2 = " << fmt_f(st.adam.beta2) << "\n";
    os << "eps = " << fmt_f(st.adam.eps) << "\n";
    os << "lambda_consistency = " << fmt_f(st.weights.lambda1) << "\n";
    os << "lambda_pseudo = " << fmt_f(st.weights.lambda2) << "\n";
    os << "ema_alpha = " << fmt_f(st.ema_alpha) << "\n";
    os << "eval_every = " << st.eval_every << "\n";
  }
  os << "\n[train]\n";
  os << "soft_consistency = " << (train.soft_consistency ? "true" : "false") << "\n";
  os << "\n[run]\n";
  os << "seed = " << run.seed << "\n";
  os << "out = " << run.out << "\n";
  os << "threads = " << run.threads << "\n";
  os << "\n[switches]\n";
  os << "consistency = " << (switches.consistency ? "true" : "false") << "\n";
  os << "aux_task = " << (switches.aux_task ? "true" : "false") << "\n";
  os << "strong_aug = " << (switches.strong_aug ? "true" : "false") << "\n";
  os << "deep_share = " << (switches.deep_share ? "true" : "false") << "\n";
  os << "ema = " << (switches.ema ? "true" : "false") << "\n";
}

std::string FullConfig::snapshot() const {
  std::ostringstream os;
  write_snapshot(os);
  return os.str();
}

FullConfig default_config() { return FullConfig{}; }

FullConfig parse_config_text(const std::string& text, const std::string& origin) {
  RawConfig raw = parse_raw(text, origin);

  static const std::vector<std::string> known = {
      "dataset", "split",  "arch",   "augment", "train",
      "stage1",  "stage2", "stage3", "run",     "switches"};
  for (const auto& [name, sec] : raw) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      int line = sec.empty() ? 0 : sec.begin()->second.line;
      fail(origin, line, "unknown section '[" + name + "]'");
    }
  }

  FullConfig cfg = default_config();
  auto section = [&raw](const std::string& name) -> Section* {
    auto it = raw.find(name);
    return it == raw.end() ? nullptr : &it->second;
  };

  {
    SectionReader r(origin, "dataset", section("dataset"));
    cfg.dataset.path = r.get_string("path", cfg.dataset.path);
    cfg.dataset.num_classes = r.get_int("num_classes", cfg.dataset.num_classes);
    cfg.dataset.image_size = r.get_int("image_size", cfg.dataset.image_size);
    cfg.dataset.train_count = r.get_int("train_count", cfg.dataset.train_count);
    cfg.dataset.val_count = r.get_int("val_count", cfg.dataset.val_count);
    cfg.dataset.min_shapes = r.get_int("min_shapes", cfg.dataset.min_shapes);
    cfg.dataset.max_shapes = r.get_int("max_shapes", cfg.dataset.max_shapes);
    cfg.dataset.noise_sigma = r.get_float("noise_sigma", cfg.dataset.noise_sigma);
    cfg.dataset.min_contrast = r.get_float("min_contrast", cfg.dataset.min_contrast);
    cfg.dataset.seed = r.get_u64("seed", cfg.dataset.seed);
    r.finish();
  }
  {
    SectionReader r(origin, "split", section("split"));
    const bool had_count = r.has("labelled_count");
    const bool had_frac = r.has("labelled_fraction");
    if (had_frac)
      cfg.split.labelled_fraction = r.get_double("labelled_fraction", 0.0);
    if (had_count) {
      cfg.split.labelled_count = r.get_int("labelled_count", 0);
      if (!had_frac) cfg.split.labelled_fraction.reset();
    }
    cfg.split.seed = r.get_u64("seed", cfg.split.seed);
    r.finish();
  }
  {
    SectionReader r(origin, "arch", section("arch"));
    cfg.arch.input_channels = r.get_int("input_channels", cfg.arch.input_channels);
    cfg.arch.trunk_widths = r.get_int_list("trunk_widths", cfg.arch.trunk_widths);
    cfg.arch.first_stride = r.get_int("first_stride", cfg.arch.first_stride);
    r.finish();
  }
  {
    SectionReader r(origin, "augment", section("augment"));
    augment::PolicyConfig& p = cfg.augment.policy;
    p.n_ops = r.get_int("n_ops", p.n_ops);
    p.flip_p = r.get_float("flip_p", p.flip_p);
    p.translate_p = r.get_float("translate_p", p.translate_p);
    p.translate_frac = r.get_float("translate_frac", p.translate_frac);
    p.scale_p = r.get_float("scale_p", p.scale_p);
    p.scale_min = r.get_float("scale_min", p.scale_min);
    p.scale_max = r.get_float("scale_max", p.scale_max);
    p.brightness_p = r.get_float("brightness_p", p.brightness_p);
    p.brightness_max = r.get_float("brightness_max", p.brightness_max);
    p.contrast_p = r.get_float("contrast_p", p.contrast_p);
    p.contrast_min = r.get_float("contrast_min", p.contrast_min);
    p.contrast_max = r.get_float("contrast_max", p.contrast_max);
    p.cut_p = r.get_float("cut_p", p.cut_p);
    p.cut_min_frac = r.get_float("cut_min_frac", p.cut_min_frac);
    p.cut_max_frac = r.get_float("cut_max_frac", p.cut_max_frac);
    cfg.augment.weak_flip = r.get_bool("weak_flip", cfg.augment.weak_flip);
    r.finish();
  }
  {
    // [train] seeds all three stages, then [stageN] overrides. The weights
    // ride along so a stage can override just one lambda.
    SectionReader r(origin, "train", section("train"));
    trainer::StageSettings base = cfg.train.stage[0];
    apply_stage_keys(r, base);
    cfg.train.soft_consistency = r.get_bool("soft_consistency", cfg.train.soft_consistency);
    r.finish();
    for (int s = 0; s < 3; ++s) cfg.train.stage[s] = base;
    for (int s = 0; s < 3; ++s) {
      SectionReader rs(origin, "stage" + std::to_string(s + 1),
                       section("stage" + std::to_string(s + 1)));
      apply_stage_keys(rs, cfg.train.stage[s]);
      rs.finish();
    }
  }
  {
    SectionReader r(origin, "run", section("run"));
    cfg.run.seed = r.get_u64("seed", cfg.run.seed);
    cfg.run.out = r.get_string("out", cfg.run.out);
    cfg.run.threads = r.get_int("threads", cfg.run.threads);
    r.finish();
  }
  {
    // Snapshots record the ablation state; accepting it back makes a
    // config_resolved.txt rerunnable as-is. --ablate still wins afterwards.
    SectionReader r(origin, "switches", section("switches"));
    cfg.switches.consistency = r.get_bool("consistency", cfg.switches.consistency);
    cfg.switches.aux_task = r.get_bool("aux_task", cfg.switches.aux_task);
    cfg.switches.strong_aug = r.get_bool("strong_aug", cfg.switches.strong_aug);
    cfg.switches.deep_share = r.get_bool("deep_share", cfg.switches.deep_share);
    cfg.switches.ema = r.get_bool("ema", cfg.switches.ema);
    r.finish();
  }

  cfg.validate();
  return cfg;
}

FullConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  TSSL_CHECK_CODE(in.good(), "io", "cannot open config file " << path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.filename().string());
}

}  // namespace tssl::config
