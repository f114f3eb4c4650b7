#include "fisherlens/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

#include "fisherlens/error.hpp"
#include "fisherlens/rng.hpp"

namespace fisherlens {

void Dataset::validate() const {
  require(!ys.empty(), ErrorKind::Degenerate, "dataset '" + name + "' is empty");
  require(xs.rank() == 2 && xs.rows() == ys.size(), ErrorKind::Dimension,
          "dataset '" + name + "': " + std::to_string(ys.size()) + " labels for features " +
              xs.shape_string());
  for (auto y : ys)
    require(y < num_classes, ErrorKind::Contract,
            "dataset '" + name + "': label " + std::to_string(y) + " outside [0, " +
                std::to_string(num_classes) + ")");
  for (double v : xs.values())
    require(v >= range_lo && v <= range_hi, ErrorKind::Contract,
            "dataset '" + name + "': feature outside declared range");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.range_lo = range_lo;
  out.range_hi = range_hi;
  out.name = name;
  out.split = split;
  const std::size_t d = dim();
  out.xs = Tensor({rows.size(), d});
  out.ys.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = xs.row(rows[r]);
    std::copy(src.begin(), src.end(), out.xs.row(r).begin());
    out.ys.push_back(ys[rows[r]]);
  }
  return out;
}

std::size_t Dataset::distinct_labels() const {
  return std::set<std::size_t>(ys.begin(), ys.end()).size();
}

// ---------------------------------------------------------------------------

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "two_gaussians") return SynthKind::TwoGaussians;
  if (name == "two_moons") return SynthKind::TwoMoons;
  if (name == "concentric_rings") return SynthKind::ConcentricRings;
  fail(ErrorKind::Config, "unknown synthetic kind '" + name +
                              "' (expected two_gaussians|two_moons|concentric_rings)");
}

const char* to_string(SynthKind k) noexcept {
  switch (k) {
    case SynthKind::TwoGaussians: return "two_gaussians";
    case SynthKind::TwoMoons: return "two_moons";
    case SynthKind::ConcentricRings: return "concentric_rings";
  }
  return "?";
}

void SynthSpec::validate() const {
  require(n_per_class >= 1, ErrorKind::Contract, "synth: n_per_class must be >= 1");
  require(noise_std >= 0.0, ErrorKind::Contract, "synth: noise_std must be >= 0");
  require(dim >= 1, ErrorKind::Contract, "synth: dim must be >= 1");
  require(kind == SynthKind::TwoGaussians || dim == 2, ErrorKind::Contract,
          "synth: moons and rings are two-dimensional");
}

namespace {

void rescale_unit(Tensor& xs) {
  const std::size_t n = xs.rows(), d = xs.cols();
  for (std::size_t k = 0; k < d; ++k) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, xs.at(i, k));
      hi = std::max(hi, xs.at(i, k));
    }
    for (std::size_t i = 0; i < n; ++i) {
      double& v = xs.at(i, k);
      v = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.5;
    }
  }
}

}  // namespace

Dataset generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t n = spec.n_per_class;
  Dataset ds;
  ds.name = to_string(spec.kind);
  ds.num_classes = 2;
  ds.xs = Tensor({2 * n, spec.dim});
  ds.ys.resize(2 * n);
  constexpr double pi = std::numbers::pi;

  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = c * n + i;
      ds.ys[r] = c;
      auto x = ds.xs.row(r);
      switch (spec.kind) {
        case SynthKind::TwoGaussians: {
          const double sign = c == 0 ? -1.0 : 1.0;
          for (std::size_t k = 0; k < spec.dim; ++k) x[k] = rng.normal(0.0, 1.0) * spec.noise_std;
          x[0] += sign * spec.separation / 2.0;
          break;
        }
        case SynthKind::TwoMoons: {
          const double theta = rng.uniform(0.0, pi);
          if (c == 0) {
            x[0] = std::cos(theta);
            x[1] = std::sin(theta);
          } else {
            x[0] = 1.0 - std::cos(theta);
            x[1] = 0.5 - std::sin(theta);
          }
          // separation widens the vertical gap between the two arcs
          x[1] += (c == 0 ? 0.5 : -0.5) * (spec.separation - 1.0) * 0.5;
          x[0] += rng.normal(0.0, 1.0) * spec.noise_std;
          x[1] += rng.normal(0.0, 1.0) * spec.noise_std;
          break;
        }
        case SynthKind::ConcentricRings: {
          const double theta = rng.uniform(0.0, 2.0 * pi);
          const double radius = c == 0 ? 1.0 : 1.0 + spec.separation;
          x[0] = radius * std::cos(theta) + rng.normal(0.0, 1.0) * spec.noise_std;
          x[1] = radius * std::sin(theta) + rng.normal(0.0, 1.0) * spec.noise_std;
          break;
        }
      }
    }
  }
  rescale_unit(ds.xs);
  return ds;
}

// ---------------------------------------------------------------------------
// Glyph images

void GlyphSpec::validate() const {
  require(num_classes >= 2 && num_classes <= 10, ErrorKind::Contract,
          "glyphs: num_classes must be in [2, 10]");
  require(n_per_class >= 1, ErrorKind::Contract, "glyphs: n_per_class must be >= 1");
  require(side >= 4, ErrorKind::Contract, "glyphs: side must be >= 4");
  require(noise_std >= 0.0 && max_shift >= 0.0 && scale_jitter >= 0.0 && scale_jitter < 1.0,
          ErrorKind::Contract, "glyphs: jitter parameters out of range");
  require(ink_min > 0.0 && ink_min <= 1.0, ErrorKind::Contract, "glyphs: ink_min in (0, 1]");
}

namespace {

struct Segment {
  double x0, y0, x1, y1;
};

struct Glyph {
  std::vector<Segment> segments;
  double ring_radius = 0.0;  // > 0 adds a circle
};

const std::array<Glyph, 10>& glyph_table() {
  static const std::array<Glyph, 10> table = {{
      {{}, 0.6},                                                      // ring
      {{{0.0, -0.7, 0.0, 0.7}}, 0.0},                                 // vertical bar
      {{{-0.7, 0.0, 0.7, 0.0}}, 0.0},                                 // horizontal bar
      {{{-0.6, 0.6, 0.6, -0.6}}, 0.0},                                // rising diagonal
      {{{-0.6, -0.6, 0.6, 0.6}}, 0.0},                                // falling diagonal
      {{{0.0, -0.7, 0.0, 0.7}, {-0.7, 0.0, 0.7, 0.0}}, 0.0},          // plus
      {{{-0.6, -0.6, 0.6, 0.6}, {-0.6, 0.6, 0.6, -0.6}}, 0.0},        // x
      {{{-0.5, -0.7, -0.5, 0.6}, {-0.5, 0.6, 0.6, 0.6}}, 0.0},        // L corner
      {{{-0.6, -0.6, 0.6, -0.6}, {0.0, -0.6, 0.0, 0.7}}, 0.0},        // T
      {{{-0.55, -0.55, 0.55, -0.55}, {0.55, -0.55, 0.55, 0.55},
        {0.55, 0.55, -0.55, 0.55}, {-0.55, 0.55, -0.55, -0.55}}, 0.0},  // box
  }};
  return table;
}

double segment_distance(double px, double py, const Segment& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double wx = px - s.x0, wy = py - s.y0;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

Dataset render_glyphs(const GlyphSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t side = spec.side, d = side * side;
  const std::size_t total = spec.num_classes * spec.n_per_class;
  Dataset ds;
  ds.name = "glyphs";
  ds.num_classes = spec.num_classes;
  ds.xs = Tensor({total, d});
  ds.ys.resize(total);
  const double half = (static_cast<double>(side) - 1.0) / 2.0;

  for (std::size_t r = 0; r < total; ++r) {
    const std::size_t c = r % spec.num_classes;
    ds.ys[r] = c;
    const Glyph& glyph = glyph_table()[c];
    const double scale = half * (1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter));
    const double cx = half + rng.uniform(-spec.max_shift, spec.max_shift);
    const double cy = half + rng.uniform(-spec.max_shift, spec.max_shift);
    const double stroke = rng.uniform(0.35, 0.65);  // half-width in pixels
    const double ink = rng.uniform(spec.ink_min, 1.0);

    std::vector<Segment> segs;
    for (const auto& s : glyph.segments)
      segs.push_back({cx + s.x0 * scale, cy + s.y0 * scale, cx + s.x1 * scale, cy + s.y1 * scale});
    const double ring = glyph.ring_radius * scale;

    auto img = ds.xs.row(r);
    for (std::size_t py = 0; py < side; ++py) {
      for (std::size_t px = 0; px < side; ++px) {
        const double fx = static_cast<double>(px), fy = static_cast<double>(py);
        double dist = INFINITY;
        for (const auto& s : segs) dist = std::min(dist, segment_distance(fx, fy, s));
        if (ring > 0)
          dist = std::min(dist, std::abs(std::hypot(fx - cx, fy - cy) - ring));
        const double coverage = std::clamp(stroke + 0.5 - dist, 0.0, 1.0);
        const double v = ink * coverage + rng.normal(0.0, spec.noise_std);
        img[py * side + px] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_be32(std::span<const unsigned char> bytes, std::size_t offset,
                        const char* file, const char* what) {
  if (offset + 4 > bytes.size())
    fail(ErrorKind::Format, std::string(file) + ": truncated while reading " + what +
                                " at offset " + std::to_string(offset));
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

}  // namespace

Dataset decode_idx(std::span<const unsigned char> images, std::span<const unsigned char> labels,
                   std::size_t limit) {
  const auto img_magic = read_be32(images, 0, "images", "magic");
  if (img_magic != kIdxImageMagic)
    fail(ErrorKind::Format, "images: bad magic " + hex32(img_magic) + " at offset 0 (expected " +
                                hex32(kIdxImageMagic) + ")");
  const auto lbl_magic = read_be32(labels, 0, "labels", "magic");
  if (lbl_magic != kIdxLabelMagic)
    fail(ErrorKind::Format, "labels: bad magic " + hex32(lbl_magic) + " at offset 0 (expected " +
                                hex32(kIdxLabelMagic) + ")");
  const std::size_t count = read_be32(images, 4, "images", "sample count");
  const std::size_t rows = read_be32(images, 8, "images", "row count");
  const std::size_t cols = read_be32(images, 12, "images", "column count");
  const std::size_t label_count = read_be32(labels, 4, "labels", "sample count");
  if (label_count != count)
    fail(ErrorKind::Format, "labels: count " + std::to_string(label_count) +
                                " at offset 4 does not match image count " +
                                std::to_string(count));
  const std::size_t d = rows * cols;
  if (d == 0) fail(ErrorKind::Format, "images: zero-sized image dimensions at offset 8");
  constexpr std::size_t img_header = 16, lbl_header = 8;
  if (images.size() < img_header + count * d)
    fail(ErrorKind::Format, "images: truncated payload, expected " +
                                std::to_string(count * d) + " bytes from offset 16, file ends at " +
                                std::to_string(images.size()));
  if (labels.size() < lbl_header + count)
    fail(ErrorKind::Format, "labels: truncated payload, expected " + std::to_string(count) +
                                " bytes from offset 8, file ends at " +
                                std::to_string(labels.size()));

  Dataset ds;
  ds.name = "idx";
  ds.limit_clamped = limit > count;
  const std::size_t n = std::min(limit, count);
  ds.xs = Tensor({n, d});
  ds.ys.resize(n);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* src = images.data() + img_header + i * d;
    auto dst = ds.xs.row(i);
    for (std::size_t k = 0; k < d; ++k) dst[k] = static_cast<double>(src[k]) / 255.0;
    ds.ys[i] = labels[lbl_header + i];
    max_label = std::max(max_label, ds.ys[i]);
  }
  ds.num_classes = n == 0 ? 0 : max_label + 1;
  return ds;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t limit) {
  const auto img = slurp(images);
  const auto lbl = slurp(labels);
  Dataset ds = decode_idx(img, lbl, limit);
  ds.name = images.stem().string();
  return ds;
}

void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images, const std::filesystem::path& labels) {
  require(rows * cols == ds.dim(), ErrorKind::Dimension,
          "write_idx: " + std::to_string(rows) + "x" + std::to_string(cols) +
              " does not match feature dimension " + std::to_string(ds.dim()));
  std::ofstream img(images, std::ios::binary | std::ios::trunc);
  std::ofstream lbl(labels, std::ios::binary | std::ios::trunc);
  if (!img || !lbl) fail(ErrorKind::Io, "write_idx: cannot open output files");
  write_be32(img, kIdxImageMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  write_be32(lbl, kIdxLabelMagic);
  write_be32(lbl, static_cast<std::uint32_t>(ds.size()));
  std::vector<char> buf(ds.dim());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.x(i);
    for (std::size_t k = 0; k < buf.size(); ++k)
      buf[k] = static_cast<char>(static_cast<unsigned char>(
          std::lround(std::clamp(x[k], 0.0, 1.0) * 255.0)));
    img.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(ds.ys[i] < 256, ErrorKind::Contract, "write_idx: label does not fit in u8");
    const char y = static_cast<char>(static_cast<unsigned char>(ds.ys[i]));
    lbl.write(&y, 1);
  }
  if (!img || !lbl) fail(ErrorKind::Io, "write_idx: write failed");
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::Contract,
          "split: train_fraction must lie in (0, 1)");
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  require(n_train >= 1 && n_train < n, ErrorKind::Degenerate,
          "split: fraction leaves an empty partition");
  Dataset train = ds.subset(std::span(order).first(n_train));
  Dataset test = ds.subset(std::span(order).subspan(n_train));
  train.split = "train";
  test.split = "test";
  require(train.distinct_labels() >= 2 && test.distinct_labels() >= 2, ErrorKind::Degenerate,
          "split: a partition would hold a single class (cross-label pairs need >= 2)");
  return {std::move(train), std::move(test)};
}

}  // namespace fisherlens
