#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "qrtag/io.hpp"

using namespace qrtag;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("qrtag_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Pgm, BinaryRoundTrip) {
  const auto dir = scratch("pgm");
  Grid<std::uint8_t> px(3, 5);
  for (std::size_t i = 0; i < px.size(); ++i) px.flat()[i] = static_cast<std::uint8_t>(i * 17);
  write_pgm(dir / "a.pgm", px);
  const GrayImage img = read_pgm(dir / "a.pgm");
  EXPECT_EQ(img.maxval, 255);
  ASSERT_EQ(img.pixels.rows(), 3u);
  ASSERT_EQ(img.pixels.cols(), 5u);
  for (std::size_t i = 0; i < px.size(); ++i) EXPECT_EQ(img.pixels.flat()[i], px.flat()[i]);
}

TEST(Pgm, AsciiWithComments) {
  const auto dir = scratch("ascii");
  std::ofstream(dir / "a.pgm") << "P2\n# comment\n3 2\n# another\n15\n0 15 0\n15 15 0\n";
  const BitGrid bits = read_bits_pgm(dir / "a.pgm");
  EXPECT_EQ(bits, BitGrid(2, 3, std::vector<std::uint8_t>{0, 1, 0, 1, 1, 0}));
}

TEST(Pgm, Errors) {
  const auto dir = scratch("err");
  std::ofstream(dir / "gray.pgm") << "P2\n2 1\n255\n0 128\n";
  EXPECT_THROW(read_bits_pgm(dir / "gray.pgm"), FormatError);
  EXPECT_THROW(read_layer_pgm(dir / "gray.pgm", LayerRole::front), FormatError);
  std::ofstream(dir / "short.pgm", std::ios::binary) << "P5\n4 4\n255\n" << std::string(3, '\0');
  EXPECT_THROW(read_pgm(dir / "short.pgm"), FormatError);
  std::ofstream(dir / "p6.pgm") << "P6\n1 1\n255\n";
  EXPECT_THROW(read_pgm(dir / "p6.pgm"), FormatError);
  EXPECT_ANY_THROW(read_pgm(dir / "missing.pgm"));
}

TEST(Pgm, LayerAndGrayExport) {
  const auto dir = scratch("layer");
  const BinaryLayer layer{BitGrid(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1}), LayerRole::rear};
  write_layer_pgm(dir / "l.pgm", layer);
  EXPECT_EQ(read_pgm(dir / "l.pgm").pixels(0, 0), 255);
  EXPECT_EQ(read_layer_pgm(dir / "l.pgm", LayerRole::rear), layer);
  RealGrid g(1, 3);
  g(0, 0) = 0.2;
  g(0, 1) = 0.5;
  g(0, 2) = 1.0;
  write_gray_pgm(dir / "g.pgm", g);
  const GrayImage img = read_pgm(dir / "g.pgm");
  EXPECT_EQ(img.pixels(0, 0), 51);
  EXPECT_EQ(img.pixels(0, 1), 128);
  EXPECT_EQ(img.pixels(0, 2), 255);
}

TEST(PackedRows, RoundTripProperty) {
  std::mt19937_64 rng(3);
  for (std::size_t width = 1; width <= 40; ++width) {
    for (int t = 0; t < 10; ++t) {
      std::vector<double> row(width);
      for (double& x : row) x = static_cast<double>(rng() & 1u);
      const std::string hex = pack_bit_row(row);
      EXPECT_EQ(hex.size(), (width + 3) / 4);
      EXPECT_EQ(unpack_bit_row(hex, width), row);
    }
  }
  EXPECT_EQ(pack_bit_row(std::vector<double>{1, 0, 0, 0, 1}), "88");
  EXPECT_THROW(unpack_bit_row("8", 5), FormatError);
  EXPECT_THROW(unpack_bit_row("g", 4), FormatError);
}

TEST(Stack, RoundTrip) {
  const auto dir = scratch("stack");
  std::mt19937_64 rng(5);
  std::vector<BitGrid> codes;
  for (int v = 0; v < 9; ++v) {
    BitGrid g(4, 7);
    for (auto& x : g.flat()) x = static_cast<std::uint8_t>(rng() & 1u);
    codes.push_back(g);
  }
  const auto stack = ViewTargetStack::from_bits(codes, make_view_spec(3), Levels{0.25, 0.6});
  write_stack(dir / "s.json", stack);
  const auto back = read_stack(dir / "s.json");
  ASSERT_EQ(back.codes.size(), 9u);
  EXPECT_EQ(back.levels(), (Levels{0.25, 0.6}));
  for (int v = 1; v <= 9; ++v) EXPECT_EQ(back.bits(v), codes[v - 1]);
}

TEST(Manifest, RoundTrip) {
  RunManifest m;
  m.cell = {12, 2};
  m.grid_k = 5;
  m.glass.pixel_pitch_um = 20.0;
  m.levels = {0.1, 0.4};
  m.wnmf.max_iters = 321;
  m.anneal.a_values = {1, 2, 3};
  m.anneal.mode = AnnealMode::original;
  m.anneal.thresh_init = std::pair{0.3, 0.6};
  m.restarts = 3;
  m.seed = 99;
  m.max_ber = 0.05;
  m.stack_path = "stack.json";
  const std::string text = manifest_to_string(m);
  const RunManifest back = manifest_from_string(text);
  EXPECT_EQ(manifest_to_string(back), text);
  EXPECT_EQ(back.cell.scale, 12);
  EXPECT_EQ(back.grid_k, 5);
  EXPECT_EQ(back.glass.pixel_pitch_um, 20.0);
  EXPECT_EQ(back.anneal.mode, AnnealMode::original);
  EXPECT_EQ(back.max_ber, 0.05);
  EXPECT_FALSE(back.max_combo_rms.has_value());
}

TEST(Manifest, DefaultsAndErrors) {
  const RunManifest m = manifest_from_string(R"({"format": "qrtag-manifest", "version": 1, "view": {"grid_k": 5}})");
  EXPECT_EQ(m.grid_k, 5);
  EXPECT_EQ(m.cell.margin, 2);
  EXPECT_EQ(m.cell.scale, 10);
  EXPECT_THROW(manifest_from_string("{"), FormatError);
  EXPECT_THROW(manifest_from_string(R"({"format": "other", "version": 1})"), FormatError);
  EXPECT_THROW(manifest_from_string(R"({"format": "qrtag-manifest", "version": 7})"), FormatError);
  EXPECT_ANY_THROW(manifest_from_string(R"({"format": "qrtag-manifest", "version": 1, "cell": {"scale": 1}})"));
}

TEST(Cache, RoundTrip) {
  const auto dir = scratch("cache");
  const CellSpec cell{3, 1};
  const ViewSpec view = make_view_spec(3);
  ComboSolverConfig cfg;
  cfg.restarts = 1;
  cfg.wnmf.max_iters = 100;
  const auto batch = solve_all_combos({{5, 9}, {300, 9}}, cell, view, Levels{}, cfg);
  write_cache(dir / "cache", batch.cache);
  const ComboCache back = read_cache(dir / "cache");
  EXPECT_EQ(back.cell.scale, 3);
  EXPECT_EQ(back.grid_k, 3);
  ASSERT_EQ(back.entries.size(), 2u);
  for (const auto& [bits, e] : batch.cache.entries) {
    const auto* b = back.find(bits);
    ASSERT_NE(b, nullptr);
    EXPECT_EQ(b->factors.w, e.factors.w);
    EXPECT_EQ(b->factors.h, e.factors.h);
    EXPECT_EQ(b->view_values, e.view_values);
    EXPECT_EQ(b->rms, e.rms);
  }
  EXPECT_TRUE(fs::exists(dir / "cache" / "combo_0000012c.json"));
}

TEST(Trace, CsvLayout) {
  const auto dir = scratch("trace");
  const std::vector<double> obj{1.0, 0.5}, rms{0.3, 0.2};
  write_trace_csv(dir / "t.csv", obj, rms);
  const std::string text = read_text(dir / "t.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "iteration,objective,rms");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}
