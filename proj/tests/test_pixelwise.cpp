#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracle/exhaustive.hpp"
#include "qrtag/pixelwise.hpp"

using namespace qrtag;

namespace {

ComboSolverConfig fast_cfg(int restarts = 2) {
  ComboSolverConfig cfg;
  cfg.restarts = restarts;
  cfg.wnmf.max_iters = 300;
  return cfg;
}

std::vector<BitGrid> random_codes(int views, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::vector<BitGrid> out;
  for (int v = 0; v < views; ++v) {
    BitGrid g(rows, cols);
    for (auto& x : g.flat()) x = static_cast<std::uint8_t>(rng() & 1u);
    out.push_back(g);
  }
  return out;
}

std::vector<BitGrid> constant_codes(const PixelCombo& combo, std::size_t rows, std::size_t cols) {
  std::vector<BitGrid> out;
  for (int v = 1; v <= combo.views; ++v) out.emplace_back(rows, cols, static_cast<std::uint8_t>(combo.bit(v)));
  return out;
}

std::vector<double> combo_levels(std::uint32_t bits, int views, const Levels& levels) {
  std::vector<double> t;
  for (int v = 0; v < views; ++v) t.push_back(((bits >> v) & 1u) ? levels.high : levels.low);
  return t;
}

}  // namespace

TEST(ComboTarget, Examples) {
  const ViewSpec view = make_view_spec(3);
  const Levels levels;
  const auto all_high = combo_target({0x1FF, 9}, view, levels);
  ASSERT_EQ(all_high.codes.size(), 9u);
  for (const auto& c : all_high.codes) EXPECT_EQ(c.values, RealGrid(1, 1, 0.5));
  const auto centre = combo_target({1u << 4, 9}, view, levels);
  for (int v = 1; v <= 9; ++v) EXPECT_EQ(centre.codes[v - 1].values(0, 0), v == 5 ? 0.5 : 0.2);
  EXPECT_THROW(combo_target({1u << 9, 9}, view, levels), std::invalid_argument);
}

TEST(Combos, Enumeration) {
  const auto all = all_combos(make_view_spec(3));
  ASSERT_EQ(all.size(), 512u);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].bits, i);
  EXPECT_EQ(all_combos(make_view_spec(1)).size(), 2u);
  EXPECT_THROW(all_combos(make_view_spec(5)), std::invalid_argument);
}

TEST(Combos, CollectDistinct) {
  std::mt19937_64 rng(1);
  const ViewSpec view = make_view_spec(3);
  const auto stack = ViewTargetStack::from_bits(random_codes(9, 5, 6, rng), view, Levels{});
  const auto combos = collect_combos(stack);
  std::set<std::uint32_t> expected;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 6; ++c) expected.insert(stack.combo_at(r, c).bits);
  ASSERT_EQ(combos.size(), expected.size());
  std::size_t i = 0;
  for (std::uint32_t b : expected) EXPECT_EQ(combos[i++].bits, b);
}

TEST(SolveCombo, SingleViewHighIsExact) {
  const CellSpec cell{2, 0};
  const ViewSpec view = make_view_spec(1);
  const Levels levels{0.25, 0.5};
  const auto entry = solve_combo({1, 1}, cell, view, levels, fast_cfg(8));
  EXPECT_EQ(oracle::best_binary_pair({0.5}, oracle::grid_shifts(1), 2, 0).best_rms, 0.0);
  EXPECT_EQ(entry.rms, 0.0);
  EXPECT_EQ(entry.view_values, std::vector<double>{0.5});
}

TEST(SolveCombo, NeverBeatsExhaustiveOptimum) {
  const CellSpec cell{2, 1};
  const ViewSpec view = make_view_spec(3);
  const Levels levels;
  std::mt19937_64 rng(3);
  for (int t = 0; t < 6; ++t) {
    const std::uint32_t bits = static_cast<std::uint32_t>(rng() % 512);
    const auto entry = solve_combo({bits, 9}, cell, view, levels, fast_cfg(4));
    const auto best = oracle::best_binary_pair(combo_levels(bits, 9, levels), oracle::grid_shifts(3), 2, 1);
    EXPECT_GE(entry.rms, best.best_rms - 1e-12) << bits;
    EXPECT_TRUE(entry.factors.satisfies_mode());
  }
}

TEST(SolveCombo, SymmetricCombosShareOptimum) {
  // Mirroring the view grid left-right, or swapping which layer moves,
  // permutes views without changing what is achievable.
  const Levels levels;
  const auto shifts = oracle::grid_shifts(3);
  auto mirror = [](std::uint32_t bits) {
    std::uint32_t out = 0;
    for (int v = 0; v < 9; ++v) {
      const int row = v / 3, col = v % 3;
      if ((bits >> v) & 1u) out |= 1u << (row * 3 + (2 - col));
    }
    return out;
  };
  auto negate = [](std::uint32_t bits) {
    std::uint32_t out = 0;
    for (int v = 0; v < 9; ++v)
      if ((bits >> v) & 1u) out |= 1u << (8 - v);
    return out;
  };
  std::mt19937_64 rng(5);
  for (int t = 0; t < 4; ++t) {
    const std::uint32_t bits = static_cast<std::uint32_t>(rng() % 512);
    const double base = oracle::best_binary_pair(combo_levels(bits, 9, levels), shifts, 2, 1).best_rms;
    for (std::uint32_t other : {mirror(bits), negate(bits)}) {
      EXPECT_NEAR(oracle::best_binary_pair(combo_levels(other, 9, levels), shifts, 2, 1).best_rms, base, 1e-12);
    }
  }
}

TEST(SolveAll, ParallelMatchesSerialAndJobCount) {
  const CellSpec cell{3, 1};
  const ViewSpec view = make_view_spec(3);
  std::vector<PixelCombo> combos;
  for (std::uint32_t b = 0; b < 512; b += 37) combos.push_back({b, 9});
  const auto cfg = fast_cfg(2);
  const auto serial = reference::solve_all_combos(combos, cell, view, Levels{}, cfg);
  for (int jobs : {1, 2, 4}) {
    const auto par = solve_all_combos(combos, cell, view, Levels{}, cfg, jobs);
    ASSERT_EQ(par.cache.entries.size(), serial.cache.entries.size());
    EXPECT_TRUE(par.failures.empty());
    for (const auto& [bits, e] : serial.cache.entries) {
      const auto* p = par.cache.find(bits);
      ASSERT_NE(p, nullptr);
      EXPECT_EQ(p->factors.w, e.factors.w);
      EXPECT_EQ(p->factors.h, e.factors.h);
      EXPECT_EQ(p->rms, e.rms);
    }
  }
}

TEST(SolveAll, FullEnumerationAtTinyScale) {
  const CellSpec cell{2, 1};
  const ViewSpec view = make_view_spec(3);
  ComboSolverConfig cfg = fast_cfg(1);
  cfg.wnmf.max_iters = 50;
  const auto batch = solve_all_combos(all_combos(view), cell, view, Levels{}, cfg);
  EXPECT_EQ(batch.cache.entries.size(), 512u);
  EXPECT_TRUE(batch.failures.empty());
}

TEST(SolveAll, DemandDrivenFiveByFive) {
  const CellSpec cell{3, 2};
  const ViewSpec view = make_view_spec(5);
  std::mt19937_64 rng(8);
  std::set<std::uint32_t> words;
  while (words.size() < 30) words.insert(static_cast<std::uint32_t>(rng() & 0x1FFFFFFu));
  std::vector<PixelCombo> combos;
  for (auto w : words) combos.push_back({w, 25});
  ComboSolverConfig cfg = fast_cfg(1);
  cfg.wnmf.max_iters = 100;
  const auto batch = solve_all_combos(combos, cell, view, Levels{}, cfg);
  EXPECT_EQ(batch.cache.entries.size(), 30u);
}

TEST(CacheSoundness, RerenderReproducesRecordedValues) {
  const CellSpec cell{4, 1};
  const ViewSpec view = make_view_spec(3);
  const Levels levels;
  std::mt19937_64 rng(12);
  for (int t = 0; t < 5; ++t) {
    const PixelCombo combo{static_cast<std::uint32_t>(rng() % 512), 9};
    const auto batch = solve_all_combos({combo}, cell, view, levels, fast_cfg(1));
    const auto stack = ViewTargetStack::from_bits(constant_codes(combo, 1, 1), view, levels);
    const auto layers = aggregate(stack, batch.cache, cell);
    const auto& entry = batch.cache.entries.at(combo.bits);
    for (int v = 1; v <= 9; ++v) {
      EXPECT_EQ(render_view(layers.front, layers.rear, view, v, cell)(0, 0), entry.view_values[v - 1]);
    }
  }
}

TEST(Aggregate, SingleAndTiledCells) {
  const CellSpec cell{3, 1};
  const ViewSpec view = make_view_spec(3);
  const PixelCombo combo{0x155, 9};
  const auto batch = solve_all_combos({combo}, cell, view, Levels{}, fast_cfg(1));
  const auto& e = batch.cache.entries.at(combo.bits);
  const auto one = aggregate(ViewTargetStack::from_bits(constant_codes(combo, 1, 1), view, Levels{}), batch.cache, cell);
  EXPECT_EQ(one.front.pixels, cell_tile(e.factors.w, cell));
  EXPECT_EQ(one.rear.pixels, cell_tile(e.factors.h, cell));
  EXPECT_EQ(one.front.role, LayerRole::front);
  EXPECT_EQ(one.rear.role, LayerRole::rear);
  const auto four = aggregate(ViewTargetStack::from_bits(constant_codes(combo, 2, 2), view, Levels{}), batch.cache, cell);
  ASSERT_EQ(four.front.rows(), 10u);
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 10; ++c) {
      EXPECT_EQ(four.front.pixels(r, c), one.front.pixels(r % 5, c % 5));
      EXPECT_EQ(four.rear.pixels(r, c), one.rear.pixels(r % 5, c % 5));
    }
}

TEST(Aggregate, MissingComboNamesPixel) {
  const CellSpec cell{2, 1};
  const ViewSpec view = make_view_spec(3);
  std::vector<BitGrid> codes(9, BitGrid(2, 2, std::uint8_t{0}));
  codes[0](1, 0) = 1;
  const auto stack = ViewTargetStack::from_bits(codes, view, Levels{});
  const auto batch = solve_all_combos({{0, 9}}, cell, view, Levels{}, fast_cfg(1));
  try {
    aggregate(stack, batch.cache, cell);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("(1, 0)"), std::string::npos) << e.what();
  }
}

TEST(Aggregate, Locality) {
  const CellSpec cell{3, 1};
  const ViewSpec view = make_view_spec(3);
  std::mt19937_64 rng(44);
  auto codes = random_codes(9, 3, 4, rng);
  const auto stack_a = ViewTargetStack::from_bits(codes, view, Levels{});
  codes[2](1, 2) ^= 1u;
  const auto stack_b = ViewTargetStack::from_bits(codes, view, Levels{});
  auto combos = collect_combos(stack_a);
  for (const auto& c : collect_combos(stack_b)) combos.push_back(c);
  std::sort(combos.begin(), combos.end());
  combos.erase(std::unique(combos.begin(), combos.end()), combos.end());
  const auto batch = solve_all_combos(combos, cell, view, Levels{}, fast_cfg(1));
  const auto a = aggregate(stack_a, batch.cache, cell);
  const auto b = aggregate(stack_b, batch.cache, cell);
  const std::size_t side = 5;
  for (std::size_t r = 0; r < a.front.rows(); ++r)
    for (std::size_t c = 0; c < a.front.cols(); ++c) {
      if (r / side == 1 && c / side == 2) continue;
      EXPECT_EQ(a.front.pixels(r, c), b.front.pixels(r, c));
      EXPECT_EQ(a.rear.pixels(r, c), b.rear.pixels(r, c));
    }
}

TEST(Finders, StampedPattern) {
  std::mt19937_64 rng(2);
  const ViewSpec view = make_view_spec(3);
  const auto stack = ViewTargetStack::from_bits(random_codes(9, 21, 21, rng), view, Levels{});
  const auto stamped = stamp_finder_patterns(stack);
  const auto pos = default_finder_positions(21, 21);
  ASSERT_EQ(pos.size(), 3u);
  EXPECT_EQ(pos[1].col, 14u);
  EXPECT_EQ(pos[2].row, 14u);
  auto in_finder = [&](std::size_t r, std::size_t c) {
    for (const auto& p : pos)
      if (r >= p.row && r < p.row + 7 && c >= p.col && c < p.col + 7) return true;
    return false;
  };
  for (int v = 0; v < 9; ++v) {
    const auto& code = stamped.codes[v].values;
    for (std::size_t r = 0; r < 21; ++r)
      for (std::size_t c = 0; c < 21; ++c) {
        if (!in_finder(r, c)) {
          EXPECT_EQ(code(r, c), stack.codes[v].values(r, c));
        }
      }
    EXPECT_EQ(code(0, 0), 0.5);
    EXPECT_EQ(code(1, 1), 0.2);
    EXPECT_EQ(code(3, 3), 0.5);
    EXPECT_EQ(code(5, 3), 0.2);
    EXPECT_EQ(code(20, 6), 0.5);
  }
}

TEST(Finders, TooSmallRejected) {
  const auto stack = ViewTargetStack::from_bits(std::vector<BitGrid>(9, BitGrid(8, 8)), make_view_spec(3), Levels{});
  EXPECT_THROW(stamp_finder_patterns(stack), std::invalid_argument);
}

TEST(Decode, RoundTripOfConstantCombos) {
  const CellSpec cell{4, 1};
  const ViewSpec view = make_view_spec(3);
  const PixelCombo combo{0x1FF, 9};
  const auto stack = ViewTargetStack::from_bits(constant_codes(combo, 2, 3), view, Levels{});
  const auto batch = solve_all_combos(collect_combos(stack), cell, view, Levels{}, fast_cfg(4));
  const auto layers = aggregate(stack, batch.cache, cell);
  const auto decoded = decode_all_views(layers, stack, cell);
  ASSERT_EQ(decoded.size(), 9u);
  for (const auto& d : decoded) {
    EXPECT_EQ(d.bits.rows(), 2u);
    EXPECT_EQ(d.ber, static_cast<double>(d.hamming) / 6.0);
  }
}

TEST(StackValidation, MismatchedShapes) {
  std::vector<BitGrid> codes(9, BitGrid(3, 3));
  codes[4] = BitGrid(3, 4);
  EXPECT_THROW(ViewTargetStack::from_bits(codes, make_view_spec(3), Levels{}), std::invalid_argument);
  EXPECT_THROW(ViewTargetStack::from_bits(std::vector<BitGrid>(8, BitGrid(3, 3)), make_view_spec(3), Levels{}),
               std::invalid_argument);
}

TEST(SolveCombo, AllHighWithinOracleGap) {
  // The gap achievable at scale 3 bounds what the solver must reach at scale 10.
  const auto shifts = oracle::grid_shifts(3);
  const auto best = oracle::best_binary_pair(std::vector<double>(9, 0.5), shifts, 3, 1);
  double delta = 0.0;
  for (const auto& s : shifts) delta = std::max(delta, std::abs(oracle::view_value(best.front, best.rear, 3, 1, s) - 0.5));
  const auto entry = solve_combo({0x1FF, 9}, CellSpec{10, 1}, make_view_spec(3), Levels{}, ComboSolverConfig{});
  for (double v : entry.view_values) {
    EXPECT_GE(v, 0.5 - delta);
    EXPECT_LE(v, 0.5 + delta);
  }
}
