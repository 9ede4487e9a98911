#include "sadda/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace sadda {

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// Streams keep the draws of different generators apart for the same seed.
enum Stream : std::uint64_t {
  kMoons = 1,
  kGlyphs,
  kShift,
  kSplit,
  kBatches,
};

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

// 5x7 bitmap digits, one row per string, '#' = ink.
constexpr std::array<std::array<const char*, 7>, 10> kFont{{
    {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},
    {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},
    {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},
    {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."},
    {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},
    {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},
    {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},
    {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},
    {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},
    {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},
}};

void require_image(const DomainDataset& ds, ShiftKind kind) {
  if (!ds.is_image()) {
    throw ContractViolation(std::string("apply_shift: ") + shift_name(kind) +
                            " requires an image dataset, got inputs " + ds.inputs.shape().str());
  }
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Exact cos/sin at multiples of 90 degrees so quarter turns are lossless.
std::pair<double, double> cos_sin(double deg) {
  const double q = deg / 90.0;
  if (q == std::round(q)) {
    static constexpr std::array<std::pair<double, double>, 4> exact{
        {{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
    const auto k = static_cast<long long>(std::round(q));
    return exact[static_cast<std::size_t>(((k % 4) + 4) % 4)];
  }
  const double rad = deg * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

Tensor<float> rotate_images(const Tensor<float>& x, double deg) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const auto [cs, sn] = cos_sin(deg);
  const double cy = (double(h) - 1) / 2, cx = (double(w) - 1) / 2;
  Tensor<float> out(x.shape());
  const float* src = x.raw();
  float* dst = out.raw();
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      // Inverse map: output pixel pulls from the source rotated by -deg.
      const double py = double(i) - cy, px = double(j) - cx;
      const double sy = std::round(cy + cs * py - sn * px);
      const double sx = std::round(cx + sn * py + cs * px);
      if (sy < 0 || sx < 0 || sy >= double(h) || sx >= double(w)) continue;
      const auto si = static_cast<std::size_t>(sy), sj = static_cast<std::size_t>(sx);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t k = 0; k < c; ++k) {
          dst[((b * h + i) * w + j) * c + k] = src[((b * h + si) * w + sj) * c + k];
        }
      }
    }
  }
  return out;
}

Tensor<float> translate_images(const Tensor<float>& x, long dy, long dx) {
  const long n = long(x.dim(0)), h = long(x.dim(1)), w = long(x.dim(2)), c = long(x.dim(3));
  Tensor<float> out(x.shape());
  for (long b = 0; b < n; ++b) {
    for (long i = 0; i < h; ++i) {
      for (long j = 0; j < w; ++j) {
        const long si = i - dy, sj = j - dx;
        if (si < 0 || sj < 0 || si >= h || sj >= w) continue;
        for (long k = 0; k < c; ++k) {
          out.raw()[((b * h + i) * w + j) * c + k] = x.raw()[((b * h + si) * w + sj) * c + k];
        }
      }
    }
  }
  return out;
}

// Largest-remainder apportionment of `total` over `fractions`.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = double(total) * fractions[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - double(counts[i]);
    used += counts[i];
  }
  while (used < total) {
    const auto it = std::max_element(remainder.begin(), remainder.end());
    const auto k = static_cast<std::size_t>(it - remainder.begin());
    ++counts[k];
    *it = -1.0;
    ++used;
  }
  return counts;
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* format)
      : bytes_(bytes), format_(format) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n) {
      throw FormatError(std::string(format_) + ": truncated at offset " + std::to_string(pos_) +
                            ": expected " + std::to_string(n) + " bytes of " + what + ", found " +
                            std::to_string(remaining()),
                        pos_);
    }
  }

  std::span<const std::uint8_t> take(std::size_t n, const std::string& what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32_be(const std::string& what) {
    auto b = take(4, what);
    return std::uint32_t(b[0]) << 24 | std::uint32_t(b[1]) << 16 | std::uint32_t(b[2]) << 8 |
           std::uint32_t(b[3]);
  }

  std::uint64_t le(std::size_t width, const std::string& what) {
    auto b = take(width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  const char* format_;
  std::size_t pos_ = 0;
};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

Shape DomainDataset::sample_shape() const {
  const auto& d = inputs.shape().dims();
  return Shape(std::vector<std::size_t>(d.begin() + 1, d.end()));
}

const std::vector<int>& DomainDataset::require_labels() const {
  if (!labels) throw ContractViolation("dataset has no labels (" + provenance + ")");
  return *labels;
}

Tensor<float> DomainDataset::gather_inputs(std::span<const std::size_t> indices) const {
  auto dims = inputs.shape().dims();
  const std::size_t stride = feature_size();
  dims[0] = indices.size();
  if (indices.empty()) throw ContractViolation("gather: empty index list");
  Tensor<float> out{Shape(dims)};
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) {
      throw ContractViolation("gather: index " + std::to_string(indices[r]) + " out of range " +
                              std::to_string(size()));
    }
    std::copy_n(inputs.raw() + indices[r] * stride, stride, out.raw() + r * stride);
  }
  return out;
}

std::vector<int> DomainDataset::gather_labels(std::span<const std::size_t> indices) const {
  const auto& all = require_labels();
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(all.at(i));
  return out;
}

DomainDataset DomainDataset::gather(std::span<const std::size_t> indices) const {
  DomainDataset out;
  out.inputs = gather_inputs(indices);
  if (labels) out.labels = gather_labels(indices);
  out.num_classes = num_classes;
  out.domain = domain;
  out.provenance = provenance;
  return out;
}

DomainDataset DomainDataset::without_labels() const {
  DomainDataset out = *this;
  out.labels.reset();
  return out;
}

void DomainDataset::validate() const {
  if (inputs.rank() != 2 && inputs.rank() != 4) {
    throw ContractViolation("dataset inputs must be rank 2 or 4, got " + inputs.shape().str());
  }
  if (!inputs.all_finite()) throw ContractViolation("dataset inputs contain non-finite values");
  if (labels) {
    if (labels->size() != size()) {
      throw ContractViolation("dataset has " + std::to_string(size()) + " samples but " +
                              std::to_string(labels->size()) + " labels");
    }
    for (int l : *labels) {
      if (l < 0 || std::size_t(l) >= num_classes) {
        throw ContractViolation("label " + std::to_string(l) + " outside [0, " +
                                std::to_string(num_classes) + ")");
      }
    }
  }
}

std::vector<std::size_t> class_counts(const DomainDataset& ds) {
  std::vector<std::size_t> counts(ds.num_classes, 0);
  for (int l : ds.require_labels()) ++counts.at(std::size_t(l));
  return counts;
}

DomainDataset gen_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n < 2) throw ContractViolation("gen_two_moons: n must be >= 2");
  if (!(noise_sigma >= 0)) throw ContractViolation("gen_two_moons: noise_sigma must be >= 0");
  auto rng = seeded(seed, kMoons);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  DomainDataset ds;
  ds.inputs = Tensor<float>(Shape{n, 2});
  ds.labels = std::vector<int>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = int(i % 2);
    const double t = angle(rng);
    double x = std::cos(t), y = std::sin(t);
    if (label == 1) {
      x = 1.0 - x;
      y = 0.5 - y;
    }
    const double nx = noise(rng), ny = noise(rng);
    ds.inputs[2 * i] = float(x + noise_sigma * nx);
    ds.inputs[2 * i + 1] = float(y + noise_sigma * ny);
    (*ds.labels)[i] = label;
  }
  ds.num_classes = 2;
  std::ostringstream prov;
  prov << "two_moons(n=" << n << ",noise=" << noise_sigma << ",seed=" << hex(seed) << ")";
  ds.provenance = prov.str();
  return ds;
}

DomainDataset gen_glyph_digits(std::size_t n, std::size_t classes, std::uint64_t seed,
                               std::size_t image_size) {
  if (n < 1) throw ContractViolation("gen_glyph_digits: n must be >= 1");
  if (classes < 2 || classes > 10) throw ContractViolation("gen_glyph_digits: classes must be 2..10");
  if (image_size == 0 || image_size % 16 != 0) {
    throw ContractViolation("gen_glyph_digits: image_size must be a positive multiple of 16");
  }
  auto rng = seeded(seed, kGlyphs);
  const double unit = double(image_size) / 16.0;
  std::uniform_real_distribution<double> scale(1.5, 2.1), shift(-2.0, 2.0), ink(0.7, 1.0);
  const std::size_t s = image_size;
  DomainDataset ds;
  ds.inputs = Tensor<float>(Shape{n, s, s, 1});
  ds.labels = std::vector<int>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = int(i % classes);
    const double sy = scale(rng) * unit, sx = scale(rng) * unit;
    const double top = double(s) / 2 - 3.5 * sy + shift(rng) * unit;
    const double left = double(s) / 2 - 2.5 * sx + shift(rng) * unit;
    const float value = float(ink(rng));
    const auto& glyph = kFont[std::size_t(label)];
    float* img = ds.inputs.raw() + i * s * s;
    for (std::size_t y = 0; y < s; ++y) {
      const double gy = std::floor((double(y) + 0.5 - top) / sy);
      if (gy < 0 || gy >= 7) continue;
      for (std::size_t x = 0; x < s; ++x) {
        const double gx = std::floor((double(x) + 0.5 - left) / sx);
        if (gx < 0 || gx >= 5) continue;
        if (glyph[std::size_t(gy)][std::size_t(gx)] == '#') img[y * s + x] = value;
      }
    }
    (*ds.labels)[i] = label;
  }
  ds.num_classes = classes;
  std::ostringstream prov;
  prov << "glyph_digits(n=" << n << ",classes=" << classes << ",size=" << image_size
       << ",seed=" << hex(seed) << ")";
  ds.provenance = prov.str();
  return ds;
}

DomainDataset to_rgb(const DomainDataset& ds) {
  if (!ds.is_image() || ds.inputs.dim(3) != 1) {
    throw ContractViolation("to_rgb expects single-channel images, got " + ds.inputs.shape().str());
  }
  const std::size_t pixels = ds.inputs.numel();
  DomainDataset out = ds;
  out.inputs = Tensor<float>(Shape{ds.inputs.dim(0), ds.inputs.dim(1), ds.inputs.dim(2), 3});
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t k = 0; k < 3; ++k) out.inputs[3 * p + k] = ds.inputs[p];
  }
  out.provenance += "|rgb";
  return out;
}

const char* shift_name(ShiftKind k) {
  switch (k) {
    case ShiftKind::rotate: return "rotate";
    case ShiftKind::translate: return "translate";
    case ShiftKind::channel_colorize: return "channel_colorize";
    case ShiftKind::background_noise: return "background_noise";
    case ShiftKind::intensity_invert: return "intensity_invert";
  }
  return "?";
}

ShiftKind parse_shift_kind(const std::string& name) {
  for (auto k : {ShiftKind::rotate, ShiftKind::translate, ShiftKind::channel_colorize,
                 ShiftKind::background_noise, ShiftKind::intensity_invert}) {
    if (name == shift_name(k)) return k;
  }
  throw ContractViolation("unknown shift kind '" + name + "'");
}

void ShiftSpec::validate() const {
  if (!std::isfinite(angle_deg) || std::abs(angle_deg) > 180.0) {
    throw ContractViolation("shift angle must be within [-180, 180] degrees");
  }
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw ContractViolation("shift sigma must be in [0, 1]");
  if (!std::isfinite(dx) || !std::isfinite(dy)) throw ContractViolation("shift offsets must be finite");
}

DomainDataset apply_shift(const DomainDataset& ds, const ShiftSpec& spec) {
  spec.validate();
  DomainDataset out = ds;
  out.domain = Domain::target;
  std::ostringstream prov;
  prov << "|" << shift_name(spec.kind) << "(angle=" << spec.angle_deg << ",dx=" << spec.dx
       << ",dy=" << spec.dy << ",sigma=" << spec.sigma << ",seed=" << hex(spec.seed) << ")";
  out.provenance += prov.str();
  auto rng = seeded(spec.seed, kShift);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  switch (spec.kind) {
    case ShiftKind::rotate:
      if (ds.is_image()) {
        out.inputs = rotate_images(ds.inputs, spec.angle_deg);
      } else {
        if (ds.inputs.dim(1) != 2) throw ContractViolation("rotate needs 2-D vectors or images");
        const auto [cs, sn] = cos_sin(spec.angle_deg);
        for (std::size_t i = 0; i < ds.size(); ++i) {
          const double x = ds.inputs[2 * i], y = ds.inputs[2 * i + 1];
          out.inputs[2 * i] = float(cs * x - sn * y);
          out.inputs[2 * i + 1] = float(sn * x + cs * y);
        }
      }
      break;
    case ShiftKind::translate:
      if (ds.is_image()) {
        out.inputs = translate_images(ds.inputs, std::lround(spec.dy), std::lround(spec.dx));
      } else {
        if (ds.inputs.dim(1) != 2) throw ContractViolation("translate needs 2-D vectors or images");
        for (std::size_t i = 0; i < ds.size(); ++i) {
          out.inputs[2 * i] = float(double(ds.inputs[2 * i]) + spec.dx);
          out.inputs[2 * i + 1] = float(double(ds.inputs[2 * i + 1]) + spec.dy);
        }
      }
      break;
    case ShiftKind::channel_colorize: {
      require_image(ds, spec.kind);
      const std::size_t n = ds.size(), pixels = ds.inputs.dim(1) * ds.inputs.dim(2);
      const std::size_t c = ds.inputs.dim(3);
      out.inputs = Tensor<float>(Shape{n, ds.inputs.dim(1), ds.inputs.dim(2), 3});
      std::uniform_real_distribution<double> tint_draw(0.3, 1.0);
      for (std::size_t b = 0; b < n; ++b) {
        std::array<double, 3> tint{};
        for (double& t : tint) t = tint_draw(rng);
        for (std::size_t p = 0; p < pixels; ++p) {
          const float* src = ds.inputs.raw() + (b * pixels + p) * c;
          double gray = 0;
          for (std::size_t k = 0; k < c; ++k) gray += src[k];
          gray /= double(c);
          for (std::size_t k = 0; k < 3; ++k) {
            const double noise = spec.sigma > 0 ? spec.sigma * unit(rng) : 0.0;
            out.inputs[(b * pixels + p) * 3 + k] = clamp01(gray * tint[k] + noise);
          }
        }
      }
      break;
    }
    case ShiftKind::background_noise:
      require_image(ds, spec.kind);
      if (spec.sigma > 0) {
        for (std::size_t i = 0; i < out.inputs.numel(); ++i) {
          out.inputs[i] = clamp01(double(ds.inputs[i]) + spec.sigma * unit(rng));
        }
      }
      break;
    case ShiftKind::intensity_invert:
      require_image(ds, spec.kind);
      for (std::size_t i = 0; i < out.inputs.numel(); ++i) out.inputs[i] = 1.0f - ds.inputs[i];
      break;
  }
  return out;
}

SplitIndices split_indices(const DomainDataset& ds, double train, double val, double test,
                           std::uint64_t seed) {
  const std::array<double, 3> f{train, val, test};
  for (double x : f) {
    if (!(x > 0.0)) throw ContractViolation("split fractions must be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw ContractViolation("split fractions must sum to 1, got " +
                            format_real(train + val + test));
  }
  // Unlabeled data is stratified as a single class.
  std::vector<std::vector<std::size_t>> by_class(ds.labels ? ds.num_classes : 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[ds.labels ? std::size_t((*ds.labels)[i]) : 0].push_back(i);
  }
  auto rng = seeded(seed, kSplit);
  SplitIndices out;
  std::array<std::vector<std::size_t>*, 3> parts{&out.train, &out.val, &out.test};
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto counts = apportion(members.size(), f);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      parts[k]->insert(parts[k]->end(), members.begin() + long(pos),
                       members.begin() + long(pos + counts[k]));
      pos += counts[k];
    }
  }
  for (auto* p : parts) std::sort(p->begin(), p->end());
  return out;
}

DatasetSplit split(const DomainDataset& ds, double train, double val, double test,
                   std::uint64_t seed) {
  const auto idx = split_indices(ds, train, val, test, seed);
  return {ds.gather(idx.train), ds.gather(idx.val), ds.gather(idx.test)};
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1) throw ContractViolation("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = seeded(seed ^ (epoch * 0x9e3779b97f4a7c15ULL), kBatches + epoch);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + long(start),
                     order.begin() + long(std::min(n, start + batch_size)));
  }
  return out;
}

std::vector<Batch> batches(const DomainDataset& ds, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(ds.size(), batch_size, seed, epoch)) {
    out.push_back({ds.gather_inputs(idx), ds.labels ? ds.gather_labels(idx) : std::vector<int>{}});
  }
  return out;
}

// IDX -------------------------------------------------------------------------

Tensor<float> IdxFile::images() const {
  if (magic != kIdxImages) throw ContractViolation("IDX file does not hold images");
  std::vector<float> v(payload.size());
  for (std::size_t i = 0; i < payload.size(); ++i) v[i] = float(payload[i]) / 255.0f;
  return Tensor<float>(Shape(std::vector<std::size_t>(dims.begin(), dims.end())), std::move(v));
}

std::vector<int> IdxFile::labels() const {
  if (magic != kIdxLabels) throw ContractViolation("IDX file does not hold labels");
  return {payload.begin(), payload.end()};
}

IdxFile parse_idx(std::span<const std::uint8_t> bytes) {
  Reader in(bytes, "idx");
  IdxFile out;
  out.magic = in.u32_be("magic");
  if (out.magic != kIdxLabels && out.magic != kIdxImages) {
    throw FormatError("idx: unsupported magic " + hex(out.magic) +
                          " at offset 0: expected 0x801 (labels) or 0x803 (images)",
                      0);
  }
  const std::size_t rank = out.magic == kIdxLabels ? 1 : 3;
  std::size_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t at = in.offset();
    const std::uint32_t dim = in.u32_be("dimension " + std::to_string(d));
    if (dim == 0) throw FormatError("idx: zero dimension at offset " + std::to_string(at), at);
    out.dims.push_back(dim);
    count *= dim;
  }
  auto payload = in.take(count, "payload");
  out.payload.assign(payload.begin(), payload.end());
  if (in.remaining() != 0) {
    throw FormatError("idx: " + std::to_string(in.remaining()) +
                          " trailing bytes at offset " + std::to_string(in.offset()) +
                          ": expected end of file",
                      in.offset());
  }
  return out;
}

std::vector<std::uint8_t> write_idx(const IdxFile& idx) {
  std::vector<std::uint8_t> out;
  put_be32(out, idx.magic);
  for (std::uint32_t d : idx.dims) put_be32(out, d);
  out.insert(out.end(), idx.payload.begin(), idx.payload.end());
  return out;
}

IdxFile idx_from_images(const Tensor<float>& images) {
  if (images.rank() != 3) throw ContractViolation("idx images must be n x h x w");
  IdxFile out;
  out.magic = kIdxImages;
  for (std::size_t d : images.shape().dims()) out.dims.push_back(std::uint32_t(d));
  for (float v : images.values()) {
    out.payload.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  return out;
}

IdxFile idx_from_labels(std::span<const int> labels) {
  IdxFile out;
  out.magic = kIdxLabels;
  out.dims = {std::uint32_t(labels.size())};
  for (int l : labels) {
    if (l < 0 || l > 255) throw ContractViolation("idx labels must fit in one byte");
    out.payload.push_back(std::uint8_t(l));
  }
  return out;
}

DomainDataset idx_dataset(const IdxFile& images, const IdxFile& labels, std::size_t num_classes) {
  const auto img = images.images();
  DomainDataset ds;
  ds.inputs = img.reshaped(Shape{img.dim(0), img.dim(1), img.dim(2), 1});
  ds.labels = labels.labels();
  ds.num_classes = num_classes;
  ds.provenance = "idx";
  ds.validate();
  return ds;
}

// Files -----------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet<float>& params) {
  std::vector<std::uint8_t> out{'S', 'A', 'D', 'C', kCheckpointVersion};
  put_le(out, params.size(), 4);
  for (const auto& [name, value] : params) {
    if (name.size() > 0xffff) throw ContractViolation("parameter name too long: " + name);
    put_le(out, name.size(), 2);
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(value.rank()));
    for (std::size_t d : value.shape().dims()) put_le(out, d, 4);
    for (float v : value.values()) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  put_le(out, fnv1a(out), 8);
  return out;
}

ParameterSet<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes, "checkpoint");
  auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), "SADC")) {
    throw FormatError("checkpoint: bad magic at offset 0: expected \"SADC\"", 0);
  }
  const auto version = in.le(1, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: version mismatch at offset 4: file has version " +
                          std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion),
                      4);
  }
  const auto count = in.le(4, "parameter count");
  ParameterSet<float> params;
  for (std::uint64_t p = 0; p < count; ++p) {
    const auto name_len = in.le(2, "name length");
    auto name_bytes = in.take(name_len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const std::size_t rank_at = in.offset();
    const auto rank = in.le(1, "rank");
    if (rank < 1 || rank > kMaxRank) {
      throw FormatError("checkpoint: rank " + std::to_string(rank) + " at offset " +
                            std::to_string(rank_at) + " outside 1.." + std::to_string(kMaxRank),
                        rank_at);
    }
    std::vector<std::size_t> dims;
    std::size_t numel = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      dims.push_back(in.le(4, "dimension"));
      numel *= dims.back();
    }
    if (numel == 0) throw FormatError("checkpoint: zero dimension for " + name, in.offset());
    in.need(numel * 4, "payload of " + name);
    std::vector<float> values(numel);
    for (float& v : values) v = std::bit_cast<float>(static_cast<std::uint32_t>(in.le(4, "payload")));
    if (params.contains(name)) {
      throw FormatError("checkpoint: duplicate parameter " + name, in.offset());
    }
    params.insert(name, Tensor<float>(Shape(dims), std::move(values)));
  }
  const std::size_t body = in.offset();
  const auto stored = in.le(8, "digest");
  if (in.remaining() != 0) {
    throw FormatError("checkpoint: " + std::to_string(in.remaining()) +
                          " trailing bytes at offset " + std::to_string(in.offset()),
                      in.offset());
  }
  const auto actual = fnv1a(bytes.first(body));
  if (stored != actual) {
    throw FormatError("checkpoint: digest mismatch at offset " + std::to_string(body) +
                          ": stored " + hex(stored) + ", computed " + hex(actual),
                      body);
  }
  return params;
}

void save_checkpoint(const ParameterSet<float>& params, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(params));
}

ParameterSet<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_real(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void export_dataset_csv(const DomainDataset& ds, const std::filesystem::path& path) {
  const std::size_t d = ds.feature_size();
  std::string text = "index,label";
  for (std::size_t f = 0; f < d; ++f) text += ",feature_" + std::to_string(f);
  text += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    text += std::to_string(i);
    text += ',';
    if (ds.labels) text += std::to_string((*ds.labels)[i]);
    for (std::size_t f = 0; f < d; ++f) {
      text += ',';
      text += format_real(ds.inputs[i * d + f]);
    }
    text += '\n';
  }
  write_text(path, text);
  if (ds.is_image()) {
    auto sidecar = path;
    sidecar += ".shape";
    write_text(sidecar, "# shape=" + std::to_string(ds.inputs.dim(1)) + "," +
                            std::to_string(ds.inputs.dim(2)) + "," +
                            std::to_string(ds.inputs.dim(3)) + "\n");
  }
}

}  // namespace sadda
