#pragma once

// Scalar reference implementations. Written straight from the operator
// definitions with double accumulation; nothing here shares code with the
// library beyond the Tensor container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "regseg/tensor.hpp"

namespace oracle {

using regseg::Shape;
using regseg::Tensor;

struct Conv {
  int cin, cout, k, stride, dilation, groups;
};

inline int conv_out(int in, const Conv& c) {
  const int pad = c.dilation * (c.k - 1) / 2;
  return (in + 2 * pad - c.dilation * (c.k - 1) - 1) / c.stride + 1;
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const std::vector<float>& bias,
                     const Conv& c) {
  const Shape s = x.shape();
  const int pad = c.dilation * (c.k - 1) / 2;
  const int oh = conv_out(s.h, c);
  const int ow = conv_out(s.w, c);
  const int cin_g = c.cin / c.groups;
  const int cout_g = c.cout / c.groups;
  Tensor out(Shape{s.n, c.cout, oh, ow}, 0.0f);
  for (int n = 0; n < s.n; ++n)
    for (int o = 0; o < c.cout; ++o) {
      const int g = o / cout_g;
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
          double acc = 0.0;
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < c.k; ++ky)
              for (int kx = 0; kx < c.k; ++kx) {
                const int iy = y * c.stride - pad + ky * c.dilation;
                const int ix = xo * c.stride - pad + kx * c.dilation;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                acc += static_cast<double>(x.at(n, g * cin_g + ci, iy, ix)) *
                       w.at(o, ci, ky, kx);
              }
          if (!bias.empty()) acc += bias[o];
          out.at(n, o, y, xo) = static_cast<float>(acc);
        }
    }
  return out;
}

inline float batchnorm(float x, float gamma, float beta, float mean, float var, float eps) {
  return static_cast<float>((static_cast<double>(x) - mean) / std::sqrt(double(var) + eps) *
                                gamma +
                            beta);
}

// 2x2 average, windows cut at the border count only real samples.
inline Tensor avgpool2x2(const Tensor& x) {
  const Shape s = x.shape();
  const int oh = (s.h + 1) / 2;
  const int ow = (s.w + 1) / 2;
  Tensor out(Shape{s.n, s.c, oh, ow}, 0.0f);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo) {
          double sum = 0.0;
          int cnt = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int iy = 2 * y + dy;
              const int ix = 2 * xo + dx;
              if (iy < s.h && ix < s.w) {
                sum += x.at(n, c, iy, ix);
                ++cnt;
              }
            }
          out.at(n, c, y, xo) = static_cast<float>(sum / cnt);
        }
  return out;
}

// Half-pixel bilinear: source coordinate (d + 0.5) * in / out - 0.5, clamped
// below at 0; the upper neighbour is clamped to the last sample.
inline Tensor bilinear(const Tensor& x, int oh, int ow) {
  const Shape s = x.shape();
  Tensor out(Shape{s.n, s.c, oh, ow}, 0.0f);
  auto coord = [](int d, int in, int outn, int& i0, int& i1, double& f) {
    double src = (d + 0.5) * static_cast<double>(in) / outn - 0.5;
    if (src < 0) src = 0;
    i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    i1 = std::min(i0 + 1, in - 1);
    f = src - i0;
  };
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y) {
        int y0, y1;
        double fy;
        coord(y, s.h, oh, y0, y1, fy);
        for (int xo = 0; xo < ow; ++xo) {
          int x0, x1;
          double fx;
          coord(xo, s.w, ow, x0, x1, fx);
          const double top = x.at(n, c, y0, x0) * (1 - fx) + x.at(n, c, y0, x1) * fx;
          const double bot = x.at(n, c, y1, x0) * (1 - fx) + x.at(n, c, y1, x1) * fx;
          out.at(n, c, y, xo) = static_cast<float>(top * (1 - fy) + bot * fy);
        }
      }
  return out;
}

// gap -> fc1 -> relu -> fc2 -> sigmoid -> channel scale
inline Tensor squeeze_excite(const Tensor& x, const Tensor& w1, const std::vector<float>& b1,
                             const Tensor& w2, const std::vector<float>& b2) {
  const Shape s = x.shape();
  const int r = w1.shape().n;
  Tensor out = x;
  for (int n = 0; n < s.n; ++n) {
    std::vector<double> gap(s.c, 0.0);
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y)
        for (int xo = 0; xo < s.w; ++xo) gap[c] += x.at(n, c, y, xo);
      gap[c] /= static_cast<double>(s.h) * s.w;
    }
    std::vector<double> hid(r);
    for (int j = 0; j < r; ++j) {
      double a = b1[j];
      for (int c = 0; c < s.c; ++c) a += w1.at(j, c, 0, 0) * gap[c];
      hid[j] = std::max(0.0, a);
    }
    for (int c = 0; c < s.c; ++c) {
      double a = b2[c];
      for (int j = 0; j < r; ++j) a += w2.at(c, j, 0, 0) * hid[j];
      const double gate = 1.0 / (1.0 + std::exp(-a));
      for (int y = 0; y < s.h; ++y)
        for (int xo = 0; xo < s.w; ++xo)
          out.at(n, c, y, xo) = static_cast<float>(x.at(n, c, y, xo) * gate);
    }
  }
  return out;
}

struct Iou {
  std::vector<std::optional<double>> per_class;
  double miou = 0;
  double miou_reduced = 0;
};

// IOU from explicit pixel sets: A = {i : label_i = c}, B = {i : pred_i = c},
// both restricted to pixels whose label is not `ignore`.
inline Iou set_iou(const std::vector<std::vector<std::uint8_t>>& preds,
                   const std::vector<std::vector<std::uint8_t>>& labels, int classes,
                   const std::set<int>& excluded, int ignore = 255) {
  Iou r;
  r.per_class.resize(classes);
  double sum = 0, sum_r = 0;
  int cnt = 0, cnt_r = 0;
  for (int c = 0; c < classes; ++c) {
    std::set<std::pair<int, int>> a, b;
    for (std::size_t img = 0; img < labels.size(); ++img)
      for (std::size_t i = 0; i < labels[img].size(); ++i) {
        if (labels[img][i] == ignore) continue;
        const std::pair<int, int> key{static_cast<int>(img), static_cast<int>(i)};
        if (labels[img][i] == c) a.insert(key);
        if (preds[img][i] == c) b.insert(key);
      }
    std::set<std::pair<int, int>> inter, uni;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::inserter(inter, inter.begin()));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(uni, uni.begin()));
    if (uni.empty()) continue;
    const double iou = static_cast<double>(inter.size()) / uni.size();
    r.per_class[c] = iou;
    sum += iou;
    ++cnt;
    if (!excluded.count(c)) {
      sum_r += iou;
      ++cnt_r;
    }
  }
  r.miou = cnt ? sum / cnt : NAN;
  r.miou_reduced = cnt_r ? sum_r / cnt_r : NAN;
  return r;
}

// Running (k, s) over a flat list of (kernel, stride, dilation) layers.
struct Layer {
  int k, s, r;
};
inline std::int64_t fov(const std::vector<Layer>& layers) {
  std::int64_t k = 1, s = 1;
  for (const Layer& l : layers) {
    k += static_cast<std::int64_t>(l.r) * (l.k - 1) * s;
    s *= l.s;
  }
  return k;
}

inline Tensor random_tensor(const Shape& s, std::mt19937_64& rng, float scale = 1.0f) {
  std::normal_distribution<float> d(0.0f, scale);
  Tensor t(s, 0.0f);
  for (float& v : t.data()) v = d(rng);
  return t;
}

inline std::vector<float> random_vector(std::size_t n, std::mt19937_64& rng, float lo,
                                        float hi) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = d(rng);
  return v;
}

}  // namespace oracle
