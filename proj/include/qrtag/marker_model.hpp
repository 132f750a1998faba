#pragma once

// Geometry of the two-layer marker: cell layout, view grid, periodic padding
// and the reshaping between rank-1 factor vectors and printed layers.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qrtag/grid.hpp"

namespace qrtag {

/// Relative front-over-rear layer shift in high-res pixels.
/// `du` is horizontal (column), `dv` vertical (row); positive is right/down.
struct Shift {
  int du = 0;
  int dv = 0;
  friend bool operator==(const Shift&, const Shift&) = default;
};

/// High-res layout of one low-res code pixel: a scale x scale information
/// window surrounded by a `margin` ring of periodic padding.
struct CellSpec {
  int scale = 100;
  int margin = 1;

  int side() const { return scale + 2 * margin; }
  int window_pixels() const { return scale * scale; }
  /// Throws std::invalid_argument unless scale >= 2 and margin >= 0.
  void validate() const;
};

struct AnglePair {
  double theta_u = 0.0;  // degrees, horizontal
  double theta_v = 0.0;  // degrees, vertical
};

/// grid_k x grid_k discrete viewing directions. View i (1-based, row-major)
/// sits at grid row (i-1)/k, column (i-1)%k; the centre view is (k*k+1)/2.
struct ViewSpec {
  int grid_k = 3;
  int shift_step = 1;
  std::vector<Shift> offsets;
  std::vector<AnglePair> angles;  // empty until annotated by the optics module

  int count() const { return grid_k * grid_k; }
  int center_index() const { return (count() + 1) / 2; }
  int half_extent() const { return (grid_k - 1) / 2; }
  int max_shift() const { return half_extent() * shift_step; }
  const Shift& offset(int view_index) const;
  void validate() const;
  void validate_against(const CellSpec& cell) const;
};

/// Builds a ViewSpec with offsets filled in row-major order.
ViewSpec make_view_spec(int grid_k, int shift_step = 1);

/// Margin that exactly absorbs the largest shift of the view grid.
int default_margin(int grid_k, int shift_step = 1);

struct ViewOffsetEntry {
  int view_index = 0;  // 1-based
  Shift shift;
};

std::vector<ViewOffsetEntry> view_offset_table(const ViewSpec& view);

enum class LayerRole { front, rear };

struct BinaryLayer {
  BitGrid pixels;
  LayerRole role = LayerRole::front;

  std::size_t rows() const { return pixels.rows(); }
  std::size_t cols() const { return pixels.cols(); }
  friend bool operator==(const BinaryLayer&, const BinaryLayer&) = default;
};

enum class FactorMode { relaxed, binary };

/// Rank-1 factors for one cell: `w` is the front window, `h` the rear window,
/// both flattened row-major.
struct FactorPair {
  std::vector<double> w;
  std::vector<double> h;
  FactorMode mode = FactorMode::relaxed;

  /// True when the entries satisfy the invariant of `mode`.
  bool satisfies_mode() const;
};

BinaryLayer reshape_vector_to_layer(std::span<const double> v, std::size_t rows, std::size_t cols,
                                    LayerRole role = LayerRole::front);
BinaryLayer reshape_vector_to_layer(std::span<const std::uint8_t> v, std::size_t rows,
                                    std::size_t cols, LayerRole role = LayerRole::front);
std::vector<std::uint8_t> layer_to_vector(const BinaryLayer& layer);

/// Torus padding: output(r, c) = input((r - margin) mod rows, (c - margin) mod cols).
template <typename T>
Grid<T> periodic_pad(const Grid<T>& g, int margin);
BinaryLayer periodic_pad(const BinaryLayer& layer, int margin);

/// Expands a binary cell-window factor into a padded cell_side x cell_side tile.
BitGrid cell_tile(std::span<const double> window, const CellSpec& cell);

inline int wrap_index(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

template <typename T>
Grid<T> periodic_pad(const Grid<T>& g, int margin) {
  if (margin < 0) throw std::invalid_argument("periodic_pad: negative margin");
  if (g.empty() || margin == 0) return g;
  const int rows = static_cast<int>(g.rows());
  const int cols = static_cast<int>(g.cols());
  Grid<T> out(rows + 2 * margin, cols + 2 * margin);
  for (int r = 0; r < rows + 2 * margin; ++r) {
    const int sr = wrap_index(r - margin, rows);
    for (int c = 0; c < cols + 2 * margin; ++c) {
      out(r, c) = g(sr, wrap_index(c - margin, cols));
    }
  }
  return out;
}

}  // namespace qrtag
