#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace perinv {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major double tensor. Values are immutable once shared; mutation is
// only through the owning object.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(Shape shape, double fill = 0.0);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double item() const;

  // Leading dimension, and the product of the trailing ones.
  std::size_t rows() const;
  std::size_t row_size() const;

  // Same data, new shape of equal size.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct ParamEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;

  std::size_t size() const { return shape_size(shape); }
  friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

// Ordered (name, shape, offset) records describing how named parameters pack
// into one flat vector.
class ParamLayout {
 public:
  ParamLayout() = default;

  void add(std::string name, Shape shape);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t total_size() const { return total_; }
  const ParamEntry& find(const std::string& name) const;

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
};

// Flat parameter vector (a model's theta or nu) plus its layout.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout);
  ParamVector(ParamLayout layout, std::vector<double> data);

  // Single unnamed block, convenient for toy objectives.
  static ParamVector from_values(std::vector<double> values);

  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return data_.size(); }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> block(const ParamEntry& e) const;
  std::span<double> block(const ParamEntry& e);
  Tensor block_tensor(const ParamEntry& e) const;

  bool same_layout(const ParamVector& other) const { return layout_ == other.layout_; }
  void require_same_layout(const ParamVector& other, const char* where) const;

  // Element-wise helpers; all require matching layouts.
  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator-=(const ParamVector& other);
  ParamVector& operator*=(double s);
  // this += s * other
  ParamVector& axpy(double s, const ParamVector& other);

  double squared_norm() const;
  double max_abs() const;
  bool all_finite() const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  ParamLayout layout_;
  std::vector<double> data_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double s, ParamVector a);
double squared_distance(const ParamVector& a, const ParamVector& b);

}  // namespace perinv
