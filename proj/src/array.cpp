#include "minmax/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace minmax {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Array::Array(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  if (shape_.size() > 2) throw ShapeError("arrays of rank > 2 are not supported");
}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 2) throw ShapeError("arrays of rank > 2 are not supported");
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Array Array::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Array(Shape{n}, std::move(v));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Array(Shape{rows, cols}, std::move(data));
}

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array(Shape{r, c}, std::move(data));
}

double Array::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on array of shape " + shape_string(shape_));
  }
  return data_[0];
}

bool Array::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Array Array::column(std::size_t c) const {
  const std::size_t n = rows(), m = cols();
  if (c >= m) throw ShapeError("column index out of range");
  Array out(Shape{n, 1});
  for (std::size_t r = 0; r < n; ++r) out[r] = data_[r * m + c];
  return out;
}

Array Array::take_rows(std::span<const std::size_t> index) const {
  const std::size_t m = cols();
  Array out(Shape{index.size(), m});
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(index[i] * m), m,
                out.storage().begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  return out;
}

}  // namespace minmax
