#include "perinv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "perinv/errors.hpp"

namespace perinv {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw LayoutError("tensor dimensions must be positive: " + shape_str(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw LayoutError("tensor shape " + shape_str(shape_) + " does not match " +
                      std::to_string(data_.size()) + " values");
  }
}

Tensor::Tensor(Shape shape, double fill)
    : Tensor(shape, std::vector<double>(shape_size(shape), fill)) {}

double Tensor::item() const {
  if (data_.size() != 1) throw LayoutError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

std::size_t Tensor::rows() const { return shape_.empty() ? 1 : shape_[0]; }

std::size_t Tensor::row_size() const {
  if (shape_.empty()) return 1;
  return data_.size() / shape_[0];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void ParamLayout::add(std::string name, Shape shape) {
  for (const auto& e : entries_) {
    if (e.name == name) throw LayoutError("duplicate parameter name '" + name + "'");
  }
  ParamEntry e{std::move(name), std::move(shape), total_};
  total_ += e.size();
  entries_.push_back(std::move(e));
}

const ParamEntry& ParamLayout::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw LayoutError("no parameter named '" + name + "'");
}

ParamVector::ParamVector(ParamLayout layout)
    : layout_(std::move(layout)), data_(layout_.total_size(), 0.0) {}

ParamVector::ParamVector(ParamLayout layout, std::vector<double> data)
    : layout_(std::move(layout)), data_(std::move(data)) {
  if (data_.size() != layout_.total_size()) {
    throw LayoutError("parameter data has " + std::to_string(data_.size()) +
                      " values, layout expects " + std::to_string(layout_.total_size()));
  }
}

ParamVector ParamVector::from_values(std::vector<double> values) {
  ParamLayout layout;
  if (!values.empty()) layout.add("p", Shape{values.size()});
  return ParamVector(std::move(layout), std::move(values));
}

std::span<const double> ParamVector::block(const ParamEntry& e) const {
  return std::span<const double>(data_).subspan(e.offset, e.size());
}

std::span<double> ParamVector::block(const ParamEntry& e) {
  return std::span<double>(data_).subspan(e.offset, e.size());
}

Tensor ParamVector::block_tensor(const ParamEntry& e) const {
  auto b = block(e);
  return Tensor(e.shape, std::vector<double>(b.begin(), b.end()));
}

void ParamVector::require_same_layout(const ParamVector& other, const char* where) const {
  if (!same_layout(other)) {
    throw LayoutError(std::string(where) + ": parameter layouts differ");
  }
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  require_same_layout(other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
  require_same_layout(other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

ParamVector& ParamVector::axpy(double s, const ParamVector& other) {
  require_same_layout(other, "axpy");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
  return *this;
}

double ParamVector::squared_norm() const {
  double acc = 0.0;
  for (double v : data_) acc += v * v;
  return acc;
}

double ParamVector::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool ParamVector::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }

double squared_distance(const ParamVector& a, const ParamVector& b) {
  a.require_same_layout(b, "squared_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace perinv
