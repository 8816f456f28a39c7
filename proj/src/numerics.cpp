#include "archrank/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "archrank/eigen_view.hpp"

namespace archrank::num {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_,
          "matrix data length " + std::to_string(data_.size()) + " does not match " +
              std::to_string(rows_) + "x" + std::to_string(cols_));
}

Matrix Matrix::row(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::row(std::initializer_list<double> values) {
  return Matrix(1, values.size(), std::vector<double>(values));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(n * m);
  for (const auto& r : rows) {
    require(r.size() == m, "ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(n, m, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ContractViolation("unknown activation '" + std::string(name) + "'");
}

Matrix forward_fc(const Matrix& x, const Matrix& weight, const Matrix& bias, Activation act) {
  require(x.cols() == weight.cols(), "forward_fc: input width " + std::to_string(x.cols()) +
                                         " vs weight " + shape_string(weight));
  require(bias.rows() == 1 && bias.cols() == weight.rows(),
          "forward_fc: bias " + shape_string(bias) + " vs weight " + shape_string(weight));
  Matrix y(x.rows(), weight.rows());
  auto out = view(y);
  out.noalias() = view(x) * view(weight).transpose();
  out.rowwise() += view(bias).row(0);
  switch (act) {
    case Activation::identity: break;
    case Activation::relu: out = out.cwiseMax(0.0); break;
    case Activation::tanh: out = out.array().tanh().matrix(); break;
  }
  return y;
}

std::vector<double> softmax(std::span<const double> logits) {
  require(!logits.empty(), "softmax of an empty vector");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = softmax(logits.row_span(r));
    std::copy(row.begin(), row.end(), out.row_span(r).begin());
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace archrank::num
