#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ctiunet {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense (batch, channel, height, width) array of doubles, row-major.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.count(), fill) {}
  Tensor4(Shape shape, std::vector<double> values);

  static Tensor4 zeros_like(const Tensor4& t) { return Tensor4(t.shape()); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y,
                    std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[index(n, c, y, x)];
  }
  double at(std::size_t n, std::size_t c, std::size_t y,
            std::size_t x) const {
    return data_[index(n, c, y, x)];
  }

  // Contiguous (h, w) plane for one (batch, channel) pair.
  std::span<double> plane(std::size_t n, std::size_t c) {
    return std::span<double>(data_).subspan(index(n, c, 0, 0), shape_.plane());
  }
  std::span<const double> plane(std::size_t n, std::size_t c) const {
    return std::span<const double>(data_).subspan(index(n, c, 0, 0),
                                                  shape_.plane());
  }

  void fill(double v);
  void add_inplace(const Tensor4& other);
  double sum() const;
  bool all_finite() const;

  // Channel range [begin, begin + count) of every batch item.
  Tensor4 slice_channels(std::size_t begin, std::size_t count) const;
  // Batch range [begin, begin + count).
  Tensor4 slice_batch(std::size_t begin, std::size_t count) const;
  // Spatial window of every (batch, channel) plane.
  Tensor4 crop(std::size_t y0, std::size_t x0, std::size_t h,
               std::size_t w) const;

  bool operator==(const Tensor4&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Stacks single-item tensors of equal (c, h, w) along the batch axis.
Tensor4 stack_batch(std::span<const Tensor4> items);

double max_abs_diff(const Tensor4& a, const Tensor4& b);

}  // namespace ctiunet
