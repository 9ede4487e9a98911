#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sadda/params.hpp"
#include "sadda/tensor.hpp"

namespace sadda {

/// Malformed bytes in an IDX file, checkpoint or config. Carries the byte
/// offset (or line number for text formats) where parsing stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

enum class Domain { source, target };

const char* domain_name(Domain d);

/// Stacked samples: rank 2 (n x d) for vector data, rank 4 (n x h x w x c)
/// for images. Labels are optional; target data handed to adaptation has none.
struct DomainDataset {
  Tensor<float> inputs;
  std::optional<std::vector<int>> labels;
  std::size_t num_classes = 2;
  Domain domain = Domain::source;
  std::string provenance;

  std::size_t size() const { return inputs.dim(0); }
  bool is_image() const { return inputs.rank() == 4; }
  /// Shape of one sample (drops the leading batch axis).
  Shape sample_shape() const;
  std::size_t feature_size() const { return inputs.numel() / size(); }
  const std::vector<int>& require_labels() const;

  /// Samples at `indices`, in that order.
  DomainDataset gather(std::span<const std::size_t> indices) const;
  Tensor<float> gather_inputs(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;

  DomainDataset without_labels() const;
  /// Throws ContractViolation if label count, label range or finiteness is off.
  void validate() const;
};

std::vector<std::size_t> class_counts(const DomainDataset& ds);

DomainDataset gen_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed);

DomainDataset gen_glyph_digits(std::size_t n, std::size_t classes, std::uint64_t seed,
                               std::size_t image_size = 16);

/// Replicates a single grayscale channel into three.
DomainDataset to_rgb(const DomainDataset& ds);

enum class ShiftKind { rotate, translate, channel_colorize, background_noise, intensity_invert };

const char* shift_name(ShiftKind k);
ShiftKind parse_shift_kind(const std::string& name);

/// rotate uses `angle_deg`, translate uses `dx`/`dy` (pixels for images,
/// coordinate offsets for vectors), channel_colorize and background_noise
/// use `sigma` as the additive noise scale.
struct ShiftSpec {
  ShiftKind kind = ShiftKind::rotate;
  double angle_deg = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Label-preserving transform of the inputs. The result is tagged as target.
///
/// channel_colorize: out = clamp(gray * tint + sigma * u, 0, 1) with one tint
/// per image drawn from U[0.3, 1]^3 and u ~ U[0, 1) per pixel. Gray is the
/// channel mean of the input.
DomainDataset apply_shift(const DomainDataset& ds, const ShiftSpec& spec);

/// ITU-R 601 luma weights used by the colorize checks.
inline constexpr float kLuma[3] = {0.299f, 0.587f, 0.114f};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

struct DatasetSplit {
  DomainDataset train, val, test;
};

SplitIndices split_indices(const DomainDataset& ds, double train, double val, double test,
                           std::uint64_t seed);
DatasetSplit split(const DomainDataset& ds, double train, double val, double test,
                   std::uint64_t seed);

/// Shuffled batch index lists for one epoch. The last batch may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch);

struct Batch {
  Tensor<float> inputs;
  std::vector<int> labels;  // empty for unlabeled data
};

std::vector<Batch> batches(const DomainDataset& ds, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch);

// IDX container ---------------------------------------------------------------

inline constexpr std::uint32_t kIdxLabels = 0x00000801;
inline constexpr std::uint32_t kIdxImages = 0x00000803;

struct IdxFile {
  std::uint32_t magic = kIdxImages;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  /// Bytes scaled by 1/255, shaped by `dims`.
  Tensor<float> images() const;
  std::vector<int> labels() const;
};

IdxFile parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_idx(const IdxFile& idx);

/// Image tensor (n x h x w) in [0,1] back to IDX bytes, rounding to nearest.
IdxFile idx_from_images(const Tensor<float>& images);
IdxFile idx_from_labels(std::span<const int> labels);

/// Images file + labels file into an n x h x w x 1 labeled dataset.
DomainDataset idx_dataset(const IdxFile& images, const IdxFile& labels, std::size_t num_classes);

// Files -----------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet<float>& params);
ParameterSet<float> decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ParameterSet<float>& params, const std::filesystem::path& path);
ParameterSet<float> load_checkpoint(const std::filesystem::path& path);

/// Shortest round-trip decimal form, always with a dot.
std::string format_real(double v);
std::string format_real(float v);

/// `index,label,feature_0..` rows. Image datasets are flattened and the
/// per-sample shape goes to `<path>.shape` as `# shape=h,w,c`.
void export_dataset_csv(const DomainDataset& ds, const std::filesystem::path& path);

}  // namespace sadda
