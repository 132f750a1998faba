#include "qrtag/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace qrtag {

void Levels::validate() const {
  if (!(low > 0.0 && low < high && high <= 1.0)) {
    std::ostringstream msg;
    msg << "levels must satisfy 0 < low < high <= 1, got (" << low << ", " << high << ")";
    throw std::invalid_argument(msg.str());
  }
}

void GrayTarget::validate() const {
  levels.validate();
  for (double v : values.flat()) {
    if (v != levels.low && v != levels.high) {
      throw std::invalid_argument("gray target entry " + std::to_string(v) + " is not a level");
    }
  }
}

GrayTarget GrayTarget::from_bits(const BitGrid& bits, const Levels& levels) {
  levels.validate();
  RealGrid values(bits.rows(), bits.cols());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    values.flat()[i] = bits.flat()[i] ? levels.high : levels.low;
  }
  return {std::move(values), levels};
}

void WeightMask::validate() const {
  bool any_positive = false;
  for (double v : weights.flat()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("weight mask entries must be >= 0");
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw std::invalid_argument("weight mask is all zero");
}

namespace {

void check_layers(const BinaryLayer& front, const BinaryLayer& rear) {
  if (!front.pixels.same_shape(rear.pixels)) {
    throw std::invalid_argument("layer shapes differ: front " + shape_str(front.pixels) +
                                ", rear " + shape_str(rear.pixels));
  }
}

void check_shift(Shift shift, int margin) {
  if (std::abs(shift.du) > margin || std::abs(shift.dv) > margin) {
    std::ostringstream msg;
    msg << "shift (" << shift.du << "," << shift.dv << ") exceeds margin " << margin;
    throw std::invalid_argument(msg.str());
  }
}

void check_tiling(std::size_t rows, std::size_t cols, int side) {
  const auto s = static_cast<std::size_t>(side);
  if (rows == 0 || cols == 0 || rows % s != 0 || cols % s != 0) {
    std::ostringstream msg;
    msg << "high-res shape " << shape_str(rows, cols) << " is not a tiling of " << side << "x"
        << side << " cells";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

RealGrid superpose(const BinaryLayer& front, const BinaryLayer& rear, Shift shift, int margin) {
  check_layers(front, rear);
  check_shift(shift, margin);
  const int rows = static_cast<int>(rear.rows());
  const int cols = static_cast<int>(rear.cols());
  RealGrid out(rear.rows(), rear.cols());
  for (int r = 0; r < rows; ++r) {
    const int fr = wrap_index(r + shift.dv, rows);
    for (int c = 0; c < cols; ++c) {
      out(r, c) = static_cast<double>(front.pixels(fr, wrap_index(c + shift.du, cols)) & rear.pixels(r, c));
    }
  }
  return out;
}

RealGrid downsample(const DownsampleOp& op, const RealGrid& hi) {
  if (op.scale < 1 || op.margin < 0) throw std::invalid_argument("invalid downsample operator");
  const int side = op.cell_side();
  check_tiling(hi.rows(), hi.cols(), side);
  const std::size_t lo_rows = hi.rows() / static_cast<std::size_t>(side);
  const std::size_t lo_cols = hi.cols() / static_cast<std::size_t>(side);
  RealGrid lo(lo_rows, lo_cols);
  const double inv_area = 1.0 / (static_cast<double>(op.scale) * op.scale);
  for (std::size_t i = 0; i < lo_rows; ++i) {
    for (std::size_t j = 0; j < lo_cols; ++j) {
      const std::size_t r0 = i * side + op.margin;
      const std::size_t c0 = j * side + op.margin;
      double sum = 0.0;
      for (int r = 0; r < op.scale; ++r) {
        for (int c = 0; c < op.scale; ++c) sum += hi(r0 + r, c0 + c);
      }
      lo(i, j) = sum * inv_area;
    }
  }
  return lo;
}

RealGrid render_view(const BinaryLayer& front, const BinaryLayer& rear, const ViewSpec& view,
                     int view_index, const CellSpec& cell) {
  check_layers(front, rear);
  cell.validate();
  const Shift shift = view.offset(view_index);
  check_shift(shift, cell.margin);
  const int side = cell.side();
  check_tiling(rear.rows(), rear.cols(), side);

  const std::size_t lo_rows = rear.rows() / static_cast<std::size_t>(side);
  const std::size_t lo_cols = rear.cols() / static_cast<std::size_t>(side);
  RealGrid lo(lo_rows, lo_cols);
  const double inv_area = 1.0 / cell.window_pixels();
  const std::ptrdiff_t n_cells = static_cast<std::ptrdiff_t>(lo_rows * lo_cols);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n_cells; ++k) {
    const std::size_t i = static_cast<std::size_t>(k) / lo_cols;
    const std::size_t j = static_cast<std::size_t>(k) % lo_cols;
    const std::size_t r0 = i * side + cell.margin;
    const std::size_t c0 = j * side + cell.margin;
    long count = 0;
    for (int r = 0; r < cell.scale; ++r) {
      const auto front_row = front.pixels.row(r0 + r + shift.dv);
      const auto rear_row = rear.pixels.row(r0 + r);
      for (int c = 0; c < cell.scale; ++c) {
        count += front_row[c0 + c + shift.du] & rear_row[c0 + c];
      }
    }
    lo(i, j) = static_cast<double>(count) * inv_area;
  }
  return lo;
}

std::vector<RealGrid> render_all_views(const BinaryLayer& front, const BinaryLayer& rear,
                                       const ViewSpec& view, const CellSpec& cell) {
  std::vector<RealGrid> out;
  out.reserve(static_cast<std::size_t>(view.count()));
  for (int v = 1; v <= view.count(); ++v) out.push_back(render_view(front, rear, view, v, cell));
  return out;
}

double objective(const GrayTarget& target, const WeightMask& mask, const RealGrid& rendered,
                 std::span<const double> w, std::span<const double> h, double lambda1,
                 double lambda2) {
  if (!target.values.same_shape(rendered) || !target.values.same_shape(mask.weights)) {
    throw std::invalid_argument("objective shape mismatch: target " + shape_str(target.values) +
                                ", mask " + shape_str(mask.weights) + ", rendered " +
                                shape_str(rendered));
  }
  if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("regularizers must be >= 0");
  double fit = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const double r = mask.weights.flat()[i] * (target.values.flat()[i] - rendered.flat()[i]);
    fit += r * r;
  }
  double ww = 0.0;
  for (double x : w) ww += x * x;
  double hh = 0.0;
  for (double x : h) hh += x * x;
  return 0.5 * fit + lambda1 * ww + lambda2 * hh;
}

double rms_error(const RealGrid& target, const RealGrid& rendered) {
  if (!target.same_shape(rendered)) {
    throw std::invalid_argument("rms_error shape mismatch: " + shape_str(target) + " vs " +
                                shape_str(rendered));
  }
  if (target.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = target.flat()[i] - rendered.flat()[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(target.size()));
}

BitGrid binarize(const RealGrid& image, double threshold) {
  BitGrid bits(image.rows(), image.cols());
  for (std::size_t i = 0; i < image.size(); ++i) bits.flat()[i] = image.flat()[i] >= threshold ? 1 : 0;
  return bits;
}

std::size_t hamming_distance(const BitGrid& a, const BitGrid& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("hamming_distance shape mismatch: " + shape_str(a) + " vs " +
                                shape_str(b));
  }
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a.flat()[i] != 0) != (b.flat()[i] != 0);
  return d;
}

namespace reference {

RealGrid render_view(const BinaryLayer& front, const BinaryLayer& rear, const ViewSpec& view,
                     int view_index, const CellSpec& cell) {
  const RealGrid hi = superpose(front, rear, view.offset(view_index), cell.margin);
  return downsample(DownsampleOp::for_cell(cell), hi);
}

}  // namespace reference

}  // namespace qrtag
