#include "sadda/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

namespace sadda {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t purpose) {
  return splitmix(seed ^ splitmix(purpose));
}

enum Purpose : std::uint64_t {
  kSourceData = 1,
  kTargetData,
  kShiftSeed,
  kSourceSplit,
  kTargetSplit,
};

class ValueParser {
 public:
  ValueParser(const ConfigFile& file, const std::string& key, const ConfigEntry& entry)
      : file_(file), key_(key), entry_(entry) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(file_.path + ":" + std::to_string(entry_.line) + ": field '" + key_ +
                          "': " + why + " (got '" + entry_.value + "')",
                      entry_.line);
  }

  double real() const {
    double v = 0;
    const auto& s = entry_.value;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("expected a number");
    return v;
  }

  std::uint64_t u64() const {
    std::uint64_t v = 0;
    const auto& s = entry_.value;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("expected a non-negative integer");
    return v;
  }

  std::size_t count() const { return static_cast<std::size_t>(u64()); }

  bool boolean() const {
    if (entry_.value == "true") return true;
    if (entry_.value == "false") return false;
    fail("expected true or false");
  }

  std::vector<std::string> list() const {
    std::vector<std::string> out;
    std::stringstream ss(entry_.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) fail("empty list item");
      out.push_back(item);
    }
    return out;
  }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> out;
    for (const auto& item : list()) {
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size() || v == 0) {
        fail("expected a comma-separated list of positive integers");
      }
      out.push_back(v);
    }
    return out;
  }

  const std::string& text() const { return entry_.value; }

 private:
  const ConfigFile& file_;
  const std::string& key_;
  const ConfigEntry& entry_;
};

using Setter = std::function<void(ExperimentConfig&, const ValueParser&)>;

struct KeySpec {
  std::string key;
  std::string help;
  Setter set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

const char* data_kind_name(DataKind k) {
  switch (k) {
    case DataKind::glyph_digits: return "glyph_digits";
    case DataKind::two_moons: return "two_moons";
    case DataKind::idx: return "idx";
  }
  return "?";
}

#define SADDA_REAL(KEY, FIELD, HELP)                                                   \
  KeySpec{KEY, HELP, [](ExperimentConfig& c, const ValueParser& p) { c.FIELD = p.real(); }, \
          [](const ExperimentConfig& c) { return format_real(c.FIELD); }}
#define SADDA_COUNT(KEY, FIELD, HELP)                                                   \
  KeySpec{KEY, HELP, [](ExperimentConfig& c, const ValueParser& p) { c.FIELD = p.count(); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }}
#define SADDA_TEXT(KEY, FIELD, HELP)                                                    \
  KeySpec{KEY, HELP, [](ExperimentConfig& c, const ValueParser& p) { c.FIELD = p.text(); }, \
          [](const ExperimentConfig& c) { return c.FIELD; }}

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs{
      KeySpec{"data.kind", "glyph_digits, two_moons or idx",
              [](ExperimentConfig& c, const ValueParser& p) {
                if (p.text() == "glyph_digits") c.data.kind = DataKind::glyph_digits;
                else if (p.text() == "two_moons") c.data.kind = DataKind::two_moons;
                else if (p.text() == "idx") c.data.kind = DataKind::idx;
                else p.fail("expected glyph_digits, two_moons or idx");
              },
              [](const ExperimentConfig& c) { return std::string(data_kind_name(c.data.kind)); }},
      SADDA_COUNT("data.source_samples", data.source_samples, "generated source samples"),
      SADDA_COUNT("data.target_samples", data.target_samples, "generated target samples"),
      SADDA_COUNT("data.classes", data.classes, "number of classes N"),
      SADDA_COUNT("data.image_size", data.image_size, "glyph image side (multiple of 16)"),
      SADDA_REAL("data.moons_noise", data.moons_noise, "two-moons Gaussian noise"),
      KeySpec{"data.rgb", "replicate glyphs to three channels",
              [](ExperimentConfig& c, const ValueParser& p) { c.data.rgb = p.boolean(); },
              [](const ExperimentConfig& c) { return std::string(c.data.rgb ? "true" : "false"); }},
      KeySpec{"data.target_is_source", "no-shift control: target samples are the source samples",
              [](ExperimentConfig& c, const ValueParser& p) { c.data.target_is_source = p.boolean(); },
              [](const ExperimentConfig& c) {
                return std::string(c.data.target_is_source ? "true" : "false");
              }},
      SADDA_TEXT("data.source_images", data.source_images, "IDX images file (kind = idx)"),
      SADDA_TEXT("data.source_labels", data.source_labels, "IDX labels file (kind = idx)"),
      SADDA_TEXT("data.target_images", data.target_images, "optional IDX target images"),
      SADDA_TEXT("data.target_labels", data.target_labels, "optional IDX target labels"),
      SADDA_REAL("split.train", data.split_train, "train fraction"),
      SADDA_REAL("split.val", data.split_val, "validation fraction"),
      SADDA_REAL("split.test", data.split_test, "test fraction"),
      SADDA_COUNT("export.per_label", data.embeddings_per_label, "embedding rows per label"),
      KeySpec{"shift.kinds", "comma-separated shifts applied to the target, or none",
              [](ExperimentConfig& c, const ValueParser& p) {
                c.shift.kinds.clear();
                for (const auto& name : p.list()) {
                  if (name == "none") continue;
                  try {
                    c.shift.kinds.push_back(parse_shift_kind(name));
                  } catch (const ContractViolation&) {
                    p.fail("unknown shift kind '" + name + "'");
                  }
                }
              },
              [](const ExperimentConfig& c) {
                std::string out;
                for (auto k : c.shift.kinds) out += (out.empty() ? "" : ",") + std::string(shift_name(k));
                return out.empty() ? std::string("none") : out;
              }},
      SADDA_REAL("shift.angle", shift.angle_deg, "rotation in degrees"),
      SADDA_REAL("shift.dx", shift.dx, "horizontal translation"),
      SADDA_REAL("shift.dy", shift.dy, "vertical translation"),
      SADDA_REAL("shift.colorize_sigma", shift.colorize_sigma, "noise added by channel_colorize"),
      SADDA_REAL("shift.noise_sigma", shift.noise_sigma, "background_noise scale"),
      KeySpec{"model.kind", "conv_image or mlp_vector",
              [](ExperimentConfig& c, const ValueParser& p) {
                if (p.text() == "conv_image") c.train.preset.kind = ArchitectureKind::conv_image;
                else if (p.text() == "mlp_vector") c.train.preset.kind = ArchitectureKind::mlp_vector;
                else p.fail("expected conv_image or mlp_vector");
              },
              [](const ExperimentConfig& c) {
                return std::string(c.train.preset.kind == ArchitectureKind::conv_image ? "conv_image"
                                                                                       : "mlp_vector");
              }},
      KeySpec{"model.encoder_widths", "encoder channels / units per layer",
              [](ExperimentConfig& c, const ValueParser& p) { c.train.preset.encoder_widths = p.counts(); },
              [](const ExperimentConfig& c) { return join(c.train.preset.encoder_widths); }},
      KeySpec{"model.discriminator_widths", "discriminator channels / units per layer",
              [](ExperimentConfig& c, const ValueParser& p) {
                c.train.preset.discriminator_widths = p.counts();
              },
              [](const ExperimentConfig& c) { return join(c.train.preset.discriminator_widths); }},
      SADDA_COUNT("model.classifier_hidden", train.preset.classifier_hidden, "classifier hidden units"),
      SADDA_COUNT("model.kernel_size", train.preset.kernel_size, "conv kernel side"),
      SADDA_COUNT("model.stride", train.preset.stride, "conv stride"),
      SADDA_REAL("model.leaky_alpha", train.preset.leaky_alpha, "discriminator leaky relu slope"),
      KeySpec{"model.handoff", "flatten or global_avg_pool",
              [](ExperimentConfig& c, const ValueParser& p) {
                if (p.text() == "flatten") c.train.preset.handoff = FeatureHandoff::flatten;
                else if (p.text() == "global_avg_pool") c.train.preset.handoff = FeatureHandoff::global_avg_pool;
                else p.fail("expected flatten or global_avg_pool");
              },
              [](const ExperimentConfig& c) {
                return std::string(c.train.preset.handoff == FeatureHandoff::flatten ? "flatten"
                                                                                     : "global_avg_pool");
              }},
      SADDA_COUNT("train.seed", train.seed, "run seed (data, init and shuffling)"),
      SADDA_COUNT("train.batch_size", train.batch_size, "mini-batch size"),
      SADDA_COUNT("train.pretrain_epochs", train.pretrain_epochs, "source pre-training epochs"),
      SADDA_COUNT("train.adapt_max_epochs", train.adapt_max_epochs, "adaptation epoch cap"),
      SADDA_REAL("train.pretrain_lr", train.pretrain_lr, "pre-training learning rate"),
      SADDA_REAL("train.adapt_lr", train.adapt_lr, "adaptation learning rate"),
      SADDA_REAL("train.beta1", train.beta1, "Adam beta1"),
      SADDA_REAL("train.beta2", train.beta2, "Adam beta2"),
      SADDA_COUNT("train.disc_steps", train.disc_steps_per_encoder_step,
                  "discriminator updates per encoder update"),
      SADDA_COUNT("train.disc_warmup_epochs", train.disc_warmup_epochs,
                  "discriminator-only epochs before adversarial updates"),
      SADDA_REAL("train.sup_disc_weight", train.sup_disc_weight, "weight of the supervised head loss"),
      SADDA_REAL("train.adv_disc_weight", train.adv_disc_weight, "weight of the source/target loss"),
      SADDA_COUNT("train.early_stop_window", train.early_stop_window, "convergence window (epochs)"),
      SADDA_REAL("train.early_stop_rel_change", train.early_stop_rel_change,
                 "convergence relative change threshold"),
      SADDA_REAL("train.failure_loss_floor", train.failure_loss_floor, "failure-mode loss floor"),
  };
  return specs;
}

#undef SADDA_REAL
#undef SADDA_COUNT
#undef SADDA_TEXT

DomainDataset load_idx_pair(const std::string& images, const std::string& labels,
                            std::size_t classes) {
  return idx_dataset(parse_idx(read_file(images)), parse_idx(read_file(labels)), classes);
}

DomainDataset shifted(const DomainDataset& ds, const ShiftConfig& shift, std::uint64_t seed) {
  DomainDataset out = ds;
  out.domain = Domain::target;
  for (std::size_t i = 0; i < shift.kinds.size(); ++i) {
    ShiftSpec spec;
    spec.kind = shift.kinds[i];
    spec.angle_deg = shift.angle_deg;
    spec.dx = shift.dx;
    spec.dy = shift.dy;
    spec.sigma = spec.kind == ShiftKind::channel_colorize ? shift.colorize_sigma : shift.noise_sigma;
    spec.seed = derive(seed, i);
    out = apply_shift(out, spec);
  }
  return out;
}

}  // namespace

ConfigFile parse_config_text(const std::string& text, const std::string& path) {
  ConfigFile out;
  out.path = path;
  std::stringstream ss(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path + ":" + std::to_string(line) + ": expected 'key = value'", line);
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw FormatError(path + ":" + std::to_string(line) + ": missing key", line);
    if (value.empty()) {
      throw FormatError(path + ":" + std::to_string(line) + ": field '" + key + "': missing value", line);
    }
    auto [it, inserted] = out.entries.emplace(key, ConfigEntry{value, line});
    if (!inserted) {
      throw FormatError(path + ":" + std::to_string(line) + ": field '" + key +
                            "': duplicate of line " + std::to_string(it->second.line),
                        line);
    }
  }
  return out;
}

ConfigFile load_config_file(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const std::exception&) {
    throw FormatError("cannot read config file " + path.string(), 0);
  }
  return parse_config_text(std::string(bytes.begin(), bytes.end()), path.string());
}

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const auto keys = [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : key_specs()) out.emplace_back(s.key, s.help);
    return out;
  }();
  return keys;
}

ExperimentConfig experiment_from_config(const ConfigFile& file) {
  // data.kind picks the preset that the remaining keys refine.
  ExperimentConfig cfg = glyph_shift_experiment();
  if (auto it = file.entries.find("data.kind"); it != file.entries.end() && it->second.value == "two_moons") {
    cfg = two_moons_experiment();
  }
  for (const auto& [key, entry] : file.entries) {
    const auto spec = std::find_if(key_specs().begin(), key_specs().end(),
                                   [&](const KeySpec& s) { return s.key == key; });
    if (spec == key_specs().end()) {
      throw FormatError(file.path + ":" + std::to_string(entry.line) + ": unknown field '" + key + "'",
                        entry.line);
    }
    spec->set(cfg, ValueParser(file, key, entry));
  }
  auto& preset = cfg.train.preset;
  preset.num_classes = cfg.data.classes;
  if (cfg.data.kind == DataKind::two_moons) {
    preset.input_shape = Shape{2};
  } else {
    preset.input_shape = Shape{cfg.data.image_size, cfg.data.image_size, cfg.data.rgb ? 3u : 1u};
  }
  try {
    cfg.train.validate();
    for (auto k : cfg.shift.kinds) {
      ShiftSpec s{k, cfg.shift.angle_deg, cfg.shift.dx, cfg.shift.dy,
                  k == ShiftKind::channel_colorize ? cfg.shift.colorize_sigma : cfg.shift.noise_sigma};
      s.validate();
    }
    if (cfg.data.kind == DataKind::two_moons && cfg.data.classes != 2) {
      throw ContractViolation("two_moons has exactly 2 classes");
    }
  } catch (const ContractViolation& e) {
    throw FormatError(file.path + ": invalid configuration: " + e.what(), 0);
  }
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> lines;
  for (const auto& s : key_specs()) {
    // Unset paths are left out; an empty value does not parse.
    if (auto v = s.get(cfg); !v.empty()) lines.emplace_back(s.key, v);
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& [k, v] : lines) out += k + " = " + v + "\n";
  return out;
}

ExperimentConfig glyph_shift_experiment() {
  ExperimentConfig cfg;
  cfg.data.kind = DataKind::glyph_digits;
  cfg.shift.kinds = {ShiftKind::channel_colorize, ShiftKind::background_noise};
  cfg.shift.noise_sigma = 0.3;
  auto& p = cfg.train.preset;
  p = ArchitecturePreset::conv_image(Shape{16, 16, 3}, 10);
  p.encoder_widths = {8, 16, 32, 64};
  p.discriminator_widths = {64, 32, 16, 8};
  cfg.train.pretrain_epochs = 10;
  cfg.train.adapt_max_epochs = 15;
  cfg.train.adapt_lr = 0.0005;
  cfg.train.disc_steps_per_encoder_step = 2;
  return cfg;
}

ExperimentConfig glyph_control_experiment() {
  ExperimentConfig cfg = glyph_shift_experiment();
  cfg.data.target_is_source = true;
  cfg.shift = ShiftConfig{};
  return cfg;
}

ExperimentConfig two_moons_experiment() {
  ExperimentConfig cfg;
  cfg.data.kind = DataKind::two_moons;
  cfg.data.classes = 2;
  cfg.data.source_samples = 400;
  cfg.data.target_samples = 400;
  cfg.shift.kinds = {ShiftKind::rotate};
  cfg.shift.angle_deg = 30.0;
  cfg.train.preset = ArchitecturePreset::mlp_vector(2, 2);
  cfg.train.pretrain_epochs = 20;
  cfg.train.adapt_max_epochs = 10;
  return cfg;
}

ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  const std::uint64_t seed = cfg.train.seed;
  DomainDataset source, target_raw;
  switch (d.kind) {
    case DataKind::glyph_digits:
      source = gen_glyph_digits(d.source_samples, d.classes, derive(seed, kSourceData), d.image_size);
      target_raw = gen_glyph_digits(d.target_samples, d.classes, derive(seed, kTargetData), d.image_size);
      if (d.rgb) {
        source = to_rgb(source);
        target_raw = to_rgb(target_raw);
      }
      break;
    case DataKind::two_moons:
      source = gen_two_moons(d.source_samples, d.moons_noise, derive(seed, kSourceData));
      target_raw = gen_two_moons(d.target_samples, d.moons_noise, derive(seed, kTargetData));
      break;
    case DataKind::idx:
      if (d.source_images.empty() || d.source_labels.empty()) {
        throw ContractViolation("data.kind = idx needs data.source_images and data.source_labels");
      }
      source = load_idx_pair(d.source_images, d.source_labels, d.classes);
      target_raw = d.target_images.empty()
                       ? source
                       : load_idx_pair(d.target_images, d.target_labels, d.classes);
      if (d.rgb) {
        source = to_rgb(source);
        target_raw = to_rgb(target_raw);
      }
      break;
  }
  source.domain = Domain::source;
  DomainDataset target = d.target_is_source ? source : shifted(target_raw, cfg.shift, derive(seed, kShiftSeed));
  target.domain = Domain::target;

  ExperimentData out;
  out.source = split(source, d.split_train, d.split_val, d.split_test, derive(seed, kSourceSplit));
  out.target = d.target_is_source
                   ? out.source
                   : split(target, d.split_train, d.split_val, d.split_test, derive(seed, kTargetSplit));
  for (auto* part : {&out.target.train, &out.target.val, &out.target.test}) part->domain = Domain::target;
  return out;
}

PretrainResult train_on_target(const ExperimentData& data, const ExperimentConfig& cfg) {
  return pretrain(data.target.train, cfg.train);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const auto data = build_experiment_data(cfg);
  const auto& preset = cfg.train.preset;
  ExperimentResult r;
  r.pretrained = pretrain(data.source.train, cfg.train);
  r.adapted = adapt(r.pretrained.encoder, r.pretrained.classifier, data.source.train,
                    data.target.train.without_labels(), cfg.train);
  r.target_trained = train_on_target(data, cfg);
  r.source_only = compose_and_evaluate(r.pretrained.encoder, r.pretrained.classifier, preset, data.target.test);
  r.sadda = compose_and_evaluate(r.adapted.target_encoder, r.pretrained.classifier, preset, data.target.test);
  r.train_on_target = compose_and_evaluate(r.target_trained.encoder, r.target_trained.classifier, preset,
                                           data.target.test);
  return r;
}

}  // namespace sadda
