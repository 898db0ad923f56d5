#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace regseg {

// Extents of an NCHW tensor. All four are >= 1 for a valid tensor.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense float32 tensor, NCHW, contiguous row-major. Owns its storage.
class Tensor {
 public:
  // A single zero element; keeps Tensor regular for containers.
  Tensor();
  Tensor(Shape shape, float fill);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }
  float at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }
  float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }

  // Contiguous h*w plane of one (n, c) channel.
  const float* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }
  float* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

Tensor create(Shape shape, float fill);
Tensor create(Shape shape, std::vector<float> values);

// Copy of channels [lo, hi).
Tensor slice_channels(const Tensor& t, int lo, int hi);

// Channel-wise concatenation in argument order.
Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);

// Largest |a - b| over all elements; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace regseg
