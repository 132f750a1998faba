#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qrtag {

/// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Grid(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      std::ostringstream msg;
      msg << "grid data has " << data_.size() << " entries, expected " << rows_ << "x" << cols_
          << " = " << rows_ * cols_;
      throw std::invalid_argument(msg.str());
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  const std::vector<T>& data() const { return data_; }

  std::span<const T> row(std::size_t r) const { return flat().subspan(r * cols_, cols_); }

  bool same_shape(const Grid& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using BitGrid = Grid<std::uint8_t>;
using RealGrid = Grid<double>;

inline std::string shape_str(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename T>
std::string shape_str(const Grid<T>& g) {
  return shape_str(g.rows(), g.cols());
}

}  // namespace qrtag
