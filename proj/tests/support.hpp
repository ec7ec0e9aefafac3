#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "image.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace tsdn::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

Image random_image(Rng& rng, std::size_t h, std::size_t w, std::size_t c = 3, double lo = 0.0, double hi = 1.0);
Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0);

// Central finite difference of f with respect to every element of x.
Tensor numeric_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps = 1e-6);

// max |a-b| / max(scale, max|b|): relative error against the reference b.
double rel_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace tsdn::test
