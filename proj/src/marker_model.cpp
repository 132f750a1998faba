#include "qrtag/marker_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qrtag {

void CellSpec::validate() const {
  if (scale < 2) throw std::invalid_argument("cell scale must be >= 2, got " + std::to_string(scale));
  if (margin < 0) throw std::invalid_argument("cell margin must be >= 0, got " + std::to_string(margin));
}

const Shift& ViewSpec::offset(int view_index) const {
  if (view_index < 1 || view_index > count()) {
    std::ostringstream msg;
    msg << "view index " << view_index << " out of range 1.." << count();
    throw std::out_of_range(msg.str());
  }
  return offsets[static_cast<std::size_t>(view_index - 1)];
}

void ViewSpec::validate() const {
  if (grid_k < 1 || grid_k % 2 == 0) {
    throw std::invalid_argument("grid_k must be an odd positive integer, got " +
                                std::to_string(grid_k));
  }
  if (shift_step < 1) {
    throw std::invalid_argument("shift_step must be positive, got " + std::to_string(shift_step));
  }
  if (static_cast<int>(offsets.size()) != count()) {
    throw std::invalid_argument("view grid has " + std::to_string(offsets.size()) +
                                " offsets, expected " + std::to_string(count()));
  }
  if (!angles.empty() && angles.size() != offsets.size()) {
    throw std::invalid_argument("view angle table size does not match offsets");
  }
}

void ViewSpec::validate_against(const CellSpec& cell) const {
  validate();
  cell.validate();
  for (const Shift& s : offsets) {
    if (std::abs(s.du) > cell.margin || std::abs(s.dv) > cell.margin) {
      std::ostringstream msg;
      msg << "view shift (" << s.du << "," << s.dv << ") exceeds cell margin " << cell.margin;
      throw std::invalid_argument(msg.str());
    }
  }
}

ViewSpec make_view_spec(int grid_k, int shift_step) {
  ViewSpec view;
  view.grid_k = grid_k;
  view.shift_step = shift_step;
  if (grid_k < 1 || grid_k % 2 == 0 || shift_step < 1) {
    view.validate();  // throws with a specific message
  }
  const int half = (grid_k - 1) / 2;
  view.offsets.reserve(static_cast<std::size_t>(grid_k * grid_k));
  for (int row = 0; row < grid_k; ++row) {
    for (int col = 0; col < grid_k; ++col) {
      view.offsets.push_back({(col - half) * shift_step, (row - half) * shift_step});
    }
  }
  return view;
}

int default_margin(int grid_k, int shift_step) { return (grid_k - 1) / 2 * shift_step; }

std::vector<ViewOffsetEntry> view_offset_table(const ViewSpec& view) {
  view.validate();
  std::vector<ViewOffsetEntry> table;
  table.reserve(view.offsets.size());
  for (int i = 0; i < view.count(); ++i) {
    table.push_back({i + 1, view.offsets[static_cast<std::size_t>(i)]});
  }
  return table;
}

bool FactorPair::satisfies_mode() const {
  auto ok = [this](double x) {
    if (mode == FactorMode::binary) return x == 0.0 || x == 1.0;
    return std::isfinite(x) && x >= 0.0;
  };
  return std::all_of(w.begin(), w.end(), ok) && std::all_of(h.begin(), h.end(), ok);
}

namespace {

void check_reshape_size(std::size_t n, std::size_t rows, std::size_t cols) {
  if (n != rows * cols) {
    std::ostringstream msg;
    msg << "cannot reshape vector of length " << n << " into " << rows << "x" << cols
        << " layer (needs " << rows * cols << ")";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

BinaryLayer reshape_vector_to_layer(std::span<const double> v, std::size_t rows, std::size_t cols,
                                    LayerRole role) {
  check_reshape_size(v.size(), rows, cols);
  std::vector<std::uint8_t> bits(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) {
      throw std::invalid_argument("reshape_vector_to_layer: entry " + std::to_string(i) +
                                  " is not binary");
    }
    bits[i] = v[i] == 1.0 ? 1 : 0;
  }
  return {BitGrid(rows, cols, std::move(bits)), role};
}

BinaryLayer reshape_vector_to_layer(std::span<const std::uint8_t> v, std::size_t rows,
                                    std::size_t cols, LayerRole role) {
  check_reshape_size(v.size(), rows, cols);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > 1) {
      throw std::invalid_argument("reshape_vector_to_layer: entry " + std::to_string(i) +
                                  " is not binary");
    }
  }
  return {BitGrid(rows, cols, std::vector<std::uint8_t>(v.begin(), v.end())), role};
}

std::vector<std::uint8_t> layer_to_vector(const BinaryLayer& layer) { return layer.pixels.data(); }

BinaryLayer periodic_pad(const BinaryLayer& layer, int margin) {
  return {periodic_pad(layer.pixels, margin), layer.role};
}

BitGrid cell_tile(std::span<const double> window, const CellSpec& cell) {
  const auto s = static_cast<std::size_t>(cell.scale);
  return periodic_pad(reshape_vector_to_layer(window, s, s).pixels, cell.margin);
}

}  // namespace qrtag
