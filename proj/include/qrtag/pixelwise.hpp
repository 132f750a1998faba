#pragma once

// Pixel-wise design: every low-res code pixel carries one bit per view. The
// bits of a pixel form a combo word; each distinct combo is solved once as a
// single-cell multi-view factorization and the binary cell factors are tiled
// into the full front and rear layers.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qrtag/factorization.hpp"
#include "qrtag/imaging.hpp"
#include "qrtag/marker_model.hpp"

namespace qrtag {

/// Largest view count for which every combo may be enumerated.
inline constexpr int kMaxFullEnumerationViews = 24;

/// One bit per view; bit (i - 1) holds view i's intended level.
struct PixelCombo {
  std::uint32_t bits = 0;
  int views = 9;

  bool bit(int view_index) const { return (bits >> (view_index - 1)) & 1u; }
  void validate() const;
  friend auto operator<=>(const PixelCombo&, const PixelCombo&) = default;
};

struct ViewTargetStack {
  std::vector<GrayTarget> codes;  // codes[i - 1] is view i
  ViewSpec view;

  std::size_t rows() const { return codes.empty() ? 0 : codes.front().values.rows(); }
  std::size_t cols() const { return codes.empty() ? 0 : codes.front().values.cols(); }
  const Levels& levels() const { return codes.front().levels; }
  void validate() const;

  static ViewTargetStack from_bits(const std::vector<BitGrid>& bits, const ViewSpec& view,
                                   const Levels& levels);
  BitGrid bits(int view_index) const;
  PixelCombo combo_at(std::size_t row, std::size_t col) const;
};

struct ComboSolverConfig {
  WnmfConfig wnmf;
  AnnealSchedule anneal;
  int restarts = 8;
  std::uint64_t seed = 0;
};

struct ComboEntry {
  PixelCombo combo;
  FactorPair factors;                // binary; w = front window, h = rear window
  std::vector<double> view_values;   // achieved value per view
  double rms = 0.0;
  // Relaxed-stage history of the selected restart; not persisted.
  std::vector<double> objective_trace;
  std::vector<double> rms_trace;
};

struct ComboFailure {
  PixelCombo combo;
  std::string message;
};

struct ComboCache {
  CellSpec cell;
  int grid_k = 3;
  int shift_step = 1;
  Levels levels;
  std::map<std::uint32_t, ComboEntry> entries;

  const ComboEntry* find(std::uint32_t bits) const;
};

struct ComboBatch {
  ComboCache cache;
  std::vector<ComboFailure> failures;
};

/// Per-view 1x1 targets for a combo.
ViewTargetStack combo_target(const PixelCombo& combo, const ViewSpec& view, const Levels& levels);

/// Joint multi-view single-cell problem for one combo.
FactorProblem combo_problem(const PixelCombo& combo, const CellSpec& cell, const ViewSpec& view,
                            const Levels& levels);

ComboEntry solve_combo(const PixelCombo& combo, const CellSpec& cell, const ViewSpec& view,
                       const Levels& levels, const ComboSolverConfig& cfg);

/// Distinct combos present in the stack, ascending.
std::vector<PixelCombo> collect_combos(const ViewTargetStack& stack);

/// Every combo word for the view grid; refused above kMaxFullEnumerationViews.
std::vector<PixelCombo> all_combos(const ViewSpec& view);

/// Solves `combos` across `jobs` OpenMP threads (0 = runtime default). The
/// cache content does not depend on the thread count.
ComboBatch solve_all_combos(const std::vector<PixelCombo>& combos, const CellSpec& cell,
                            const ViewSpec& view, const Levels& levels,
                            const ComboSolverConfig& cfg, int jobs = 0);

struct DesignLayers {
  BinaryLayer front;
  BinaryLayer rear;
};

/// Tiles each pixel's cached cell into both layers.
DesignLayers aggregate(const ViewTargetStack& stack, const ComboCache& cache, const CellSpec& cell);

struct GridPos {
  std::size_t row = 0;
  std::size_t col = 0;
};

inline constexpr std::size_t kFinderSide = 7;

/// Top-left corners of the finders at the top-left, top-right and bottom-left.
std::vector<GridPos> default_finder_positions(std::size_t rows, std::size_t cols);

/// Writes 7x7 concentric finders (high ring, low ring, high 3x3 core) into
/// every view. The code must be at least 16 pixels per side.
ViewTargetStack stamp_finder_patterns(const ViewTargetStack& stack,
                                      const std::vector<GridPos>& positions);
ViewTargetStack stamp_finder_patterns(const ViewTargetStack& stack);

struct ViewDecode {
  int view_index = 0;
  BitGrid bits;
  std::size_t hamming = 0;
  double ber = 0.0;
  double rms = 0.0;
};

/// Renders every view, binarizes at the level midpoint and compares with the intended codes.
std::vector<ViewDecode> decode_all_views(const DesignLayers& layers, const ViewTargetStack& stack,
                                         const CellSpec& cell);

namespace reference {

/// Single-threaded loop over the combos, kept to check the parallel solver.
ComboBatch solve_all_combos(const std::vector<PixelCombo>& combos, const CellSpec& cell,
                            const ViewSpec& view, const Levels& levels,
                            const ComboSolverConfig& cfg);

}  // namespace reference

}  // namespace qrtag
