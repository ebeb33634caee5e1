#include "ctiunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ctiunet/errors.hpp"

namespace ctiunet {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

Tensor4::Tensor4(Shape shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.count()) {
    throw ConfigError("tensor of shape " + shape_.str() + " needs " +
                      std::to_string(shape_.count()) + " values, got " +
                      std::to_string(data_.size()));
  }
}

void Tensor4::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor4::add_inplace(const Tensor4& other) {
  if (other.shape_ != shape_) {
    throw ConfigError("cannot add " + other.shape_.str() + " into " +
                      shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

double Tensor4::sum() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

bool Tensor4::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor4 Tensor4::slice_channels(std::size_t begin, std::size_t count) const {
  if (begin + count > shape_.c) {
    throw ConfigError("channel slice [" + std::to_string(begin) + ", " +
                      std::to_string(begin + count) + ") out of range for " +
                      shape_.str());
  }
  Tensor4 out({shape_.n, count, shape_.h, shape_.w});
  const std::size_t plane = shape_.plane();
  for (std::size_t n = 0; n < shape_.n; ++n) {
    auto src = data_.begin() + static_cast<std::ptrdiff_t>(index(n, begin, 0, 0));
    std::copy(src, src + static_cast<std::ptrdiff_t>(count * plane),
              out.data_.begin() +
                  static_cast<std::ptrdiff_t>(out.index(n, 0, 0, 0)));
  }
  return out;
}

Tensor4 Tensor4::slice_batch(std::size_t begin, std::size_t count) const {
  if (begin + count > shape_.n) {
    throw ConfigError("batch slice out of range for " + shape_.str());
  }
  const std::size_t item = shape_.c * shape_.plane();
  std::vector<double> values(
      data_.begin() + static_cast<std::ptrdiff_t>(begin * item),
      data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * item));
  return Tensor4({count, shape_.c, shape_.h, shape_.w}, std::move(values));
}

Tensor4 Tensor4::crop(std::size_t y0, std::size_t x0, std::size_t h,
                      std::size_t w) const {
  if (y0 + h > shape_.h || x0 + w > shape_.w) {
    throw ConfigError("crop window exceeds " + shape_.str());
  }
  Tensor4 out({shape_.n, shape_.c, h, w});
  for (std::size_t n = 0; n < shape_.n; ++n)
    for (std::size_t c = 0; c < shape_.c; ++c)
      for (std::size_t y = 0; y < h; ++y) {
        const double* src = &data_[index(n, c, y0 + y, x0)];
        std::copy(src, src + w, &out.at(n, c, y, 0));
      }
  return out;
}

Tensor4 stack_batch(std::span<const Tensor4> items) {
  if (items.empty()) return {};
  const Shape first = items.front().shape();
  std::vector<double> values;
  values.reserve(first.count() * items.size());
  for (const auto& t : items) {
    const Shape s = t.shape();
    if (s.n != 1 || s.c != first.c || s.h != first.h || s.w != first.w) {
      throw ConfigError("cannot stack " + s.str() + " with " + first.str());
    }
    values.insert(values.end(), t.data().begin(), t.data().end());
  }
  return Tensor4({items.size(), first.c, first.h, first.w}, std::move(values));
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("shape mismatch " + a.shape().str() + " vs " +
                      b.shape().str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ctiunet
