#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "errors.hpp"

namespace tsdn {

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)),
      data_(std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>()), fill) {}

std::size_t Tensor::stride0() const {
  require(!shape_.empty(), ErrorCode::Shape, "stride0 of rank-0 tensor");
  return shape_[0] == 0 ? 0 : data_.size() / shape_[0];
}

std::span<double> Tensor::slice0(std::size_t n) {
  const std::size_t s = stride0();
  return std::span<double>(data_).subspan(n * s, s);
}

std::span<const double> Tensor::slice0(std::size_t n) const {
  const std::size_t s = stride0();
  return std::span<const double>(data_).subspan(n * s, s);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require(same_shape(other), ErrorCode::Shape, "tensor add: " + shape_str() + " vs " + other.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

Tensor concat0(std::span<const Tensor* const> parts) {
  require(!parts.empty(), ErrorCode::InvalidInput, "concat0 of nothing");
  std::vector<std::size_t> shape = parts.front()->shape();
  std::size_t rows = 0;
  for (const Tensor* p : parts) {
    require(p->rank() == shape.size() && std::equal(shape.begin() + 1, shape.end(), p->shape().begin() + 1),
            ErrorCode::Shape, "concat0 trailing shape mismatch: " + p->shape_str());
    rows += p->dim(0);
  }
  shape[0] = rows;
  Tensor out(shape);
  double* dst = out.data();
  for (const Tensor* p : parts) dst = std::copy(p->data(), p->data() + p->size(), dst);
  return out;
}

Tensor concat0(const Tensor& a, const Tensor& b) {
  const Tensor* parts[] = {&a, &b};
  return concat0(parts);
}

Tensor take0(const Tensor& t, std::size_t begin, std::size_t count) {
  require(begin + count <= t.dim(0), ErrorCode::Shape, "take0 out of range");
  std::vector<std::size_t> shape = t.shape();
  shape[0] = count;
  Tensor out(shape);
  const std::size_t s = t.stride0();
  std::copy(t.data() + begin * s, t.data() + (begin + count) * s, out.data());
  return out;
}

Tensor take0(const Tensor& t, std::span<const std::size_t> rows) {
  std::vector<std::size_t> shape = t.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  const std::size_t s = t.stride0();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < t.dim(0), ErrorCode::Shape, "take0 row out of range");
    std::copy(t.data() + rows[i] * s, t.data() + (rows[i] + 1) * s, out.data() + i * s);
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorCode::Shape, "max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace tsdn
