#include <benchmark/benchmark.h>

#include <random>

#include "qrtag/pixelwise.hpp"

using namespace qrtag;

namespace {

std::vector<PixelCombo> sample_combos(int n) {
  std::vector<PixelCombo> out;
  for (int i = 0; i < n; ++i) out.push_back({static_cast<std::uint32_t>((i * 97) % 512), 9});
  return out;
}

ComboSolverConfig bench_cfg() {
  ComboSolverConfig cfg;
  cfg.restarts = 2;
  return cfg;
}

void BM_SolveCombosSerial(benchmark::State& state) {
  const auto combos = sample_combos(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto batch = reference::solve_all_combos(combos, CellSpec{10, 1}, make_view_spec(3), Levels{}, bench_cfg());
    benchmark::DoNotOptimize(batch);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SolveCombosParallel(benchmark::State& state) {
  const auto combos = sample_combos(16);
  const int jobs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto batch = solve_all_combos(combos, CellSpec{10, 1}, make_view_spec(3), Levels{}, bench_cfg(), jobs);
    benchmark::DoNotOptimize(batch);
  }
  state.SetItemsProcessed(state.iterations() * 16);
}

struct Layers {
  BinaryLayer front, rear;
};

Layers random_layers(std::size_t cells, const CellSpec& cell) {
  std::mt19937_64 rng(1);
  const std::size_t n = cells * static_cast<std::size_t>(cell.side());
  Layers l{{BitGrid(n, n), LayerRole::front}, {BitGrid(n, n), LayerRole::rear}};
  for (auto& x : l.front.pixels.flat()) x = static_cast<std::uint8_t>(rng() & 1u);
  for (auto& x : l.rear.pixels.flat()) x = static_cast<std::uint8_t>(rng() & 1u);
  return l;
}

void BM_RenderReference(benchmark::State& state) {
  const CellSpec cell{100, 1};
  const auto l = random_layers(static_cast<std::size_t>(state.range(0)), cell);
  const ViewSpec view = make_view_spec(3);
  for (auto _ : state) benchmark::DoNotOptimize(reference::render_view(l.front, l.rear, view, 6, cell));
}

void BM_RenderFused(benchmark::State& state) {
  const CellSpec cell{100, 1};
  const auto l = random_layers(static_cast<std::size_t>(state.range(0)), cell);
  const ViewSpec view = make_view_spec(3);
  for (auto _ : state) benchmark::DoNotOptimize(render_view(l.front, l.rear, view, 6, cell));
}

}  // namespace

BENCHMARK(BM_SolveCombosSerial)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolveCombosParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RenderReference)->Arg(8)->Arg(21)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderFused)->Arg(8)->Arg(21)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
