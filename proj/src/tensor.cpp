#include "regseg/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "regseg/errors.hpp"

namespace regseg {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" +
         std::to_string(h) + "x" + std::to_string(w);
}

namespace {

void check_extents(const Shape& shape) {
  if (!shape.valid()) {
    throw SizeError("tensor extents must be >= 1, got " + shape.str());
  }
}

}  // namespace

Tensor::Tensor() : data_(1, 0.0f) {}

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  check_extents(shape);
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(shape), data_(std::move(values)) {
  check_extents(shape);
  if (data_.size() != shape.numel()) {
    throw SizeError("value count " + std::to_string(data_.size()) +
                    " does not match shape " + shape.str());
  }
}

Tensor create(Shape shape, float fill) { return Tensor(shape, fill); }

Tensor create(Shape shape, std::vector<float> values) {
  return Tensor(shape, std::move(values));
}

Tensor slice_channels(const Tensor& t, int lo, int hi) {
  const Shape& s = t.shape();
  if (lo < 0 || hi > s.c || lo >= hi) {
    throw IndexError("channel slice [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + ") out of range for " +
                     std::to_string(s.c) + " channels");
  }
  Tensor out(Shape{s.n, hi - lo, s.h, s.w}, 0.0f);
  const std::size_t span = static_cast<std::size_t>(hi - lo) * s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(t.plane(n, lo), span, out.plane(n, 0));
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  int channels = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat spatial mismatch: " + first.str() + " vs " +
                       s.str());
    }
    channels += s.c;
  }
  Tensor out(Shape{first.n, channels, first.h, first.w}, 0.0f);
  for (int n = 0; n < first.n; ++n) {
    int c0 = 0;
    for (const Tensor& p : parts) {
      const std::size_t span = p.shape().c * first.plane();
      std::copy_n(p.plane(n, 0), span, out.plane(n, c0));
      c0 += p.shape().c;
    }
  }
  return out;
}

Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff shape mismatch: " + a.shape().str() +
                     " vs " + b.shape().str());
  }
  float m = 0.0f;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const float d = std::fabs(da[i] - db[i]);
    if (std::isnan(d)) return d;
    m = std::max(m, d);
  }
  return m;
}

}  // namespace regseg
