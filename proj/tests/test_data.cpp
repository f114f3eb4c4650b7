#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "fisherlens/data.hpp"
#include "fisherlens/error.hpp"

using namespace fisherlens;
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

std::vector<unsigned char> cat(std::initializer_list<std::vector<unsigned char>> parts) {
  std::vector<unsigned char> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// Two 2×2 images with labels 3 and 1.
const std::vector<unsigned char> kImages =
    cat({be32(0x00000803), be32(2), be32(2), be32(2), {0, 255, 51, 102}, {255, 0, 0, 255}});
const std::vector<unsigned char> kLabels = cat({be32(0x00000801), be32(2), {3, 1}});

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Contract;
}

}  // namespace

TEST(Idx, HandBuiltFixtureDecodesExactly) {
  const Dataset ds = decode_idx(kImages, kLabels, 10);
  ASSERT_EQ(ds.size(), 2u);
  ASSERT_EQ(ds.dim(), 4u);
  EXPECT_EQ(ds.xs, Tensor::matrix(2, 4, {0.0, 1.0, 0.2, 0.4, 1.0, 0.0, 0.0, 1.0}));
  EXPECT_EQ(ds.ys, (std::vector<std::size_t>{3, 1}));
  EXPECT_EQ(ds.num_classes, 4u);
  EXPECT_TRUE(ds.limit_clamped);
  const Dataset one = decode_idx(kImages, kLabels, 1);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_FALSE(one.limit_clamped);
}

TEST(Idx, MalformedInputsAreFormatErrors) {
  const std::vector<unsigned char> header_only(kImages.begin(), kImages.begin() + 16);
  EXPECT_EQ(kind_of([&] { decode_idx(header_only, kLabels, 10); }), ErrorKind::Format);
  auto bad_magic = kImages;
  bad_magic[3] = 0x01;
  EXPECT_EQ(kind_of([&] { decode_idx(bad_magic, kLabels, 10); }), ErrorKind::Format);
  const auto three_labels = cat({be32(0x00000801), be32(3), {3, 1, 0}});
  EXPECT_EQ(kind_of([&] { decode_idx(kImages, three_labels, 10); }), ErrorKind::Format);
  const std::vector<unsigned char> short_labels(kLabels.begin(), kLabels.end() - 1);
  EXPECT_EQ(kind_of([&] { decode_idx(kImages, short_labels, 10); }), ErrorKind::Format);
  try {
    decode_idx(header_only, kLabels, 10);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

TEST(Idx, FileRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "fisherlens_idx_test";
  fs::create_directories(dir);
  GlyphSpec g;
  g.n_per_class = 5;
  g.num_classes = 3;
  g.seed = 2;
  const Dataset src = render_glyphs(g);
  write_idx(src, g.side, g.side, dir / "img", dir / "lbl");
  const Dataset back = load_idx(dir / "img", dir / "lbl", 1000);
  EXPECT_EQ(back.ys, src.ys);
  for (std::size_t i = 0; i < src.xs.size(); ++i) EXPECT_NEAR(back.xs[i], src.xs[i], 0.5 / 255 + 1e-12);
  EXPECT_EQ(kind_of([&] { load_idx(dir / "missing", dir / "lbl", 10); }), ErrorKind::Io);
  fs::remove_all(dir);
}

TEST(Generate, NoiselessGaussiansSitAtRescaledMeans) {
  SynthSpec s;
  s.noise_std = 0.0;
  s.n_per_class = 4;
  s.dim = 3;
  const Dataset ds = generate(s);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.xs.at(i, 0), ds.ys[i] == 0 ? 0.0 : 1.0);
    EXPECT_EQ(ds.xs.at(i, 1), 0.5);
    EXPECT_EQ(ds.xs.at(i, 2), 0.5);
  }
}

TEST(Generate, DeterministicBalancedAndInRange) {
  for (SynthKind k : {SynthKind::TwoGaussians, SynthKind::TwoMoons, SynthKind::ConcentricRings}) {
    SynthSpec s;
    s.kind = k;
    s.n_per_class = 37;
    s.seed = 5;
    const Dataset a = generate(s), b = generate(s);
    EXPECT_EQ(a.xs, b.xs);
    EXPECT_EQ(a.ys, b.ys);
    EXPECT_EQ(std::count(a.ys.begin(), a.ys.end(), 0u), 37);
    EXPECT_EQ(std::count(a.ys.begin(), a.ys.end(), 1u), 37);
    for (double v : a.xs.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Glyphs, DeterministicInterleavedAndInRange) {
  GlyphSpec g;
  g.num_classes = 5;
  g.n_per_class = 20;
  g.seed = 9;
  const Dataset a = render_glyphs(g), b = render_glyphs(g);
  EXPECT_EQ(a.xs, b.xs);
  ASSERT_EQ(a.size(), 100u);
  EXPECT_EQ(a.dim(), 64u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.ys[i], i % 5);
  for (double v : a.xs.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  g.num_classes = 11;
  EXPECT_THROW(g.validate(), Error);
}

TEST(Split, HalfOfTenBalanced) {
  SynthSpec s;
  s.n_per_class = 5;
  const Dataset ds = generate(s);
  const auto [train, test] = split(ds, 0.5, 3);
  EXPECT_EQ(train.size(), 5u);
  EXPECT_EQ(test.size(), 5u);
  const auto [t2, s2] = split(ds, 0.5, 3);
  EXPECT_EQ(train.xs, t2.xs);
  EXPECT_EQ(test.ys, s2.ys);
}

TEST(Split, PreservesMultiplicity) {
  GlyphSpec g;
  g.n_per_class = 30;
  const Dataset ds = render_glyphs(g);
  const auto [train, test] = split(ds, 0.7, 1);
  EXPECT_EQ(train.size() + test.size(), ds.size());
  std::map<std::vector<double>, int> counts;
  for (std::size_t i = 0; i < ds.size(); ++i) counts[{ds.x(i).begin(), ds.x(i).end()}]++;
  for (const Dataset* part : {&train, &test})
    for (std::size_t i = 0; i < part->size(); ++i) counts[{part->x(i).begin(), part->x(i).end()}]--;
  for (const auto& [row, c] : counts) EXPECT_EQ(c, 0);
}

TEST(Split, SingleClassPartitionIsDegenerate) {
  SynthSpec s;
  s.n_per_class = 9;
  Dataset ds = generate(s);
  // Keep one sample of class 1 at the tail; one side of any split lacks it.
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.ys[i] == 0) rows.push_back(i);
  rows.push_back(ds.size() - 1);
  const Dataset skewed = ds.subset(rows);
  EXPECT_EQ(kind_of([&] { split(skewed, 0.5, 4); }), ErrorKind::Degenerate);
}
