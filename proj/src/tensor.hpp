#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tsdn {

// Dense row-major tensor of doubles. Network code uses 4-D NCHW layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  static Tensor nchw(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0) {
    return Tensor({n, c, h, w}, fill);
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Elements per leading-index slice (c*h*w for NCHW).
  std::size_t stride0() const;
  std::span<double> slice0(std::size_t n);
  std::span<const double> slice0(std::size_t n) const;

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;

  std::string shape_str() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Stacks leading-index slices of several tensors with identical trailing shape.
Tensor concat0(std::span<const Tensor* const> parts);
Tensor concat0(const Tensor& a, const Tensor& b);
// Copies rows [begin, begin+count) along the leading axis.
Tensor take0(const Tensor& t, std::size_t begin, std::size_t count);
Tensor take0(const Tensor& t, std::span<const std::size_t> rows);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace tsdn
