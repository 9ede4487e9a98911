#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sadda/data.hpp"
#include "sadda/pipeline.hpp"

namespace sadda {

/// `key = value` lines, `#` comments, dotted keys. Later duplicates are an
/// error. Values keep their line number for diagnostics.
struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
};

struct ConfigFile {
  std::string path;
  std::map<std::string, ConfigEntry> entries;
};

/// Throws FormatError("<path>:<line>: ...") on malformed lines.
ConfigFile parse_config_text(const std::string& text, const std::string& path = "<config>");
ConfigFile load_config_file(const std::filesystem::path& path);

enum class DataKind { glyph_digits, two_moons, idx };

struct DataConfig {
  DataKind kind = DataKind::glyph_digits;
  std::size_t source_samples = 2000;
  std::size_t target_samples = 2000;
  std::size_t classes = 10;
  std::size_t image_size = 16;
  double moons_noise = 0.1;
  /// Replicate grayscale glyphs to three channels.
  bool rgb = true;
  /// No-shift control: the target set is the source set itself.
  bool target_is_source = false;
  std::string source_images, source_labels, target_images, target_labels;
  double split_train = 0.6, split_val = 0.2, split_test = 0.2;
  std::size_t embeddings_per_label = 100;
};

struct ShiftConfig {
  std::vector<ShiftKind> kinds;
  double angle_deg = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double colorize_sigma = 0.0;
  double noise_sigma = 0.0;
};

struct ExperimentConfig {
  DataConfig data;
  ShiftConfig shift;
  TrainConfig train;
};

/// Every recognised key with its meaning, for `--help` style listings.
const std::vector<std::pair<std::string, std::string>>& config_keys();

/// Unknown keys and bad values throw FormatError naming the line and key.
ExperimentConfig experiment_from_config(const ConfigFile& file);

/// Resolved configuration back in config syntax (sorted keys).
std::string render_config(const ExperimentConfig& cfg);

/// Presets matching the experiments shipped in configs/.
ExperimentConfig glyph_shift_experiment();
/// glyph_shift_experiment with the target domain equal to the source domain.
ExperimentConfig glyph_control_experiment();
ExperimentConfig two_moons_experiment();

struct ExperimentData {
  DatasetSplit source;
  DatasetSplit target;
};

/// Datasets for one run, all derived from `cfg.train.seed`.
ExperimentData build_experiment_data(const ExperimentConfig& cfg);

struct ExperimentResult {
  double source_only = 0.0;
  double sadda = 0.0;
  double train_on_target = 0.0;
  PretrainResult pretrained;
  AdaptResult adapted;
  PretrainResult target_trained;
};

/// Model trained on labeled target data, the upper-bound reference.
PretrainResult train_on_target(const ExperimentData& data, const ExperimentConfig& cfg);

/// pretrain -> adapt -> evaluate all three models on the target test split.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace sadda
