// Copyright (c) 2026 The xvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xvec/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xvec/error.hpp"

namespace xvec {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ConfigError("ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::slice_rows(std::size_t begin, std::size_t end) const {
  Matrix out(end - begin, cols_);
  std::copy(data_.begin() + begin * cols_, data_.begin() + end * cols_, out.data_.begin());
  return out;
}

Matrix Matrix::slice_cols(std::size_t begin, std::size_t end) const {
  Matrix out(rows_, end - begin);
  for (std::size_t r = 0; r < rows_; ++r) {
    auto src = row(r).subspan(begin, end - begin);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix vstack(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  std::size_t rows = 0;
  const std::size_t cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ConfigError("vstack: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  double* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data(), p.data() + p.size(), dst);
  return out;
}

Matrix& operator+=(Matrix& lhs, const Matrix& rhs) {
  if (!lhs.same_shape(rhs)) {
    throw ConfigError("matrix add: shape " + std::to_string(lhs.rows()) + "x" +
                      std::to_string(lhs.cols()) + " vs " + std::to_string(rhs.rows()) + "x" +
                      std::to_string(rhs.cols()));
  }
  auto a = lhs.flat();
  auto b = rhs.flat();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return lhs;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ConfigError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

}  // namespace xvec
