#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fisherlens/tensor.hpp"

namespace fisherlens {

/// Labelled feature matrix. Features lie in [range_lo, range_hi].
struct Dataset {
  Tensor xs;  // N×d
  std::vector<std::size_t> ys;
  std::size_t num_classes = 0;
  double range_lo = 0.0;
  double range_hi = 1.0;
  std::string name;
  std::string split = "all";
  /// Set by load_idx when the requested limit exceeded the file's count.
  bool limit_clamped = false;

  std::size_t size() const noexcept { return ys.size(); }
  std::size_t dim() const { return xs.cols(); }
  std::span<const double> x(std::size_t i) const { return xs.row(i); }

  void validate() const;
  /// Rows in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;
  std::size_t distinct_labels() const;
};

enum class SynthKind { TwoGaussians, TwoMoons, ConcentricRings };

SynthKind parse_synth_kind(const std::string& name);
const char* to_string(SynthKind k) noexcept;

struct SynthSpec {
  SynthKind kind = SynthKind::TwoGaussians;
  std::size_t n_per_class = 100;
  double noise_std = 0.1;
  double separation = 2.0;
  std::size_t dim = 2;  // TwoGaussians only; the curves are planar
  std::uint64_t seed = 0;

  void validate() const;
};

/// Seeded two-class sample, class 0 rows first. Each feature is min-max
/// rescaled into [0, 1]; constant features map to 0.5.
Dataset generate(const SynthSpec& spec);

/// Synthetic stroke-glyph images: each class is a fixed stroke pattern
/// (ring, bars, diagonals, crosses, corners, box) drawn with random offset,
/// scale, stroke width and ink level over Gaussian background noise.
struct GlyphSpec {
  std::size_t num_classes = 4;  // ≤ 10
  std::size_t n_per_class = 1000;
  std::size_t side = 8;         // images are side×side
  double max_shift = 1.5;       // pixels
  double scale_jitter = 0.15;   // relative
  double noise_std = 0.25;
  double ink_min = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rows interleave classes (0, 1, …, C−1, 0, 1, …).
Dataset render_glyphs(const GlyphSpec& spec);

/// IDX big-endian: u8 image tensor (magic 0x00000803, dims N, rows, cols) and
/// u8 label vector (magic 0x00000801, dim N).
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Loads the first `limit` samples; pixels map to [0, 1] as value/255.
/// Sets limit_clamped when the files hold fewer than `limit` samples.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit);
Dataset decode_idx(std::span<const unsigned char> images, std::span<const unsigned char> labels,
                   std::size_t limit);

/// Writes a [0,1] dataset as IDX with pixel = round(255·x). Requires
/// rows·cols == dim and labels < 256.
void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images, const std::filesystem::path& labels);

/// Seeded shuffle then partition; both parts must hold ≥ 2 distinct labels.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

}  // namespace fisherlens
