#pragma once

// Forward image formation: superposition of the shifted front layer over the
// rear layer, block-average downsampling, per-view rendering and the weighted
// least-squares objective.

#include <span>
#include <vector>

#include "qrtag/grid.hpp"
#include "qrtag/marker_model.hpp"

namespace qrtag {

struct Levels {
  double low = 0.2;
  double high = 0.5;

  double midpoint() const { return 0.5 * (low + high); }
  void validate() const;
  friend bool operator==(const Levels&, const Levels&) = default;
};

/// Low-res grayscale code for one view. Entries are either levels.low or levels.high.
struct GrayTarget {
  RealGrid values;
  Levels levels;

  void validate() const;
  /// Maps bit 0 to levels.low and bit 1 to levels.high.
  static GrayTarget from_bits(const BitGrid& bits, const Levels& levels);
};

/// Box filter over the central scale x scale window of each cell.
struct DownsampleOp {
  int scale = 100;
  int margin = 1;

  static DownsampleOp for_cell(const CellSpec& cell) { return {cell.scale, cell.margin}; }
  int cell_side() const { return scale + 2 * margin; }
};

struct WeightMask {
  RealGrid weights;

  static WeightMask ones(std::size_t rows, std::size_t cols) { return {RealGrid(rows, cols, 1.0)}; }
  void validate() const;
};

/// out(r, c) = front(r + dv, c + du) * rear(r, c), indices wrapped on the
/// layer torus. Within a cell's central window the wrap never triggers when
/// |du|, |dv| <= margin, so the cell's own padding supplies the shifted pixels.
RealGrid superpose(const BinaryLayer& front, const BinaryLayer& rear, Shift shift, int margin);

RealGrid downsample(const DownsampleOp& op, const RealGrid& hi);

/// Low-res image seen from one view. Cells are rendered in parallel.
RealGrid render_view(const BinaryLayer& front, const BinaryLayer& rear, const ViewSpec& view,
                     int view_index, const CellSpec& cell);

/// All views, index 1..k*k stored at position index-1.
std::vector<RealGrid> render_all_views(const BinaryLayer& front, const BinaryLayer& rear,
                                       const ViewSpec& view, const CellSpec& cell);

/// 0.5 * ||C o (V - R)||_F^2 + lambda1 ||w||^2 + lambda2 ||h||^2
double objective(const GrayTarget& target, const WeightMask& mask, const RealGrid& rendered,
                 std::span<const double> w, std::span<const double> h, double lambda1,
                 double lambda2);

double rms_error(const RealGrid& target, const RealGrid& rendered);
inline double rms_error(const GrayTarget& target, const RealGrid& rendered) {
  return rms_error(target.values, rendered);
}

/// Threshold at `threshold`; values >= threshold decode to 1.
BitGrid binarize(const RealGrid& image, double threshold);

std::size_t hamming_distance(const BitGrid& a, const BitGrid& b);

namespace reference {

/// Straight composition downsample(superpose(...)), kept as the serial oracle
/// for the fused parallel renderer.
RealGrid render_view(const BinaryLayer& front, const BinaryLayer& rear, const ViewSpec& view,
                     int view_index, const CellSpec& cell);

}  // namespace reference

}  // namespace qrtag
