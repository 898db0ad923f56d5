#include "regseg/nn_ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "regseg/errors.hpp"
#include "regseg/parallel.hpp"

namespace regseg {

Shape ConvSpec::weight_shape() const {
  return Shape{out_channels, in_channels / std::max(groups, 1), kernel, kernel};
}

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw SpecError("conv channels must be >= 1");
  }
  if (kernel < 1 || kernel % 2 == 0) {
    throw SpecError("conv kernel must be odd, got " + std::to_string(kernel));
  }
  if (stride < 1 || dilation < 1) {
    throw SpecError("conv stride and dilation must be >= 1");
  }
  if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0) {
    throw SpecError("groups=" + std::to_string(groups) +
                    " must divide in_channels=" + std::to_string(in_channels) +
                    " and out_channels=" + std::to_string(out_channels));
  }
}

namespace {

void check_conv_args(const Tensor& input, const Tensor& weights,
                     std::span<const float> bias, const ConvSpec& spec) {
  spec.validate();
  if (input.shape().c != spec.in_channels) {
    throw ShapeError("conv input has " + std::to_string(input.shape().c) +
                     " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  if (weights.shape() != spec.weight_shape()) {
    throw ShapeError("conv weights " + weights.shape().str() + ", expected " +
                     spec.weight_shape().str());
  }
  if (spec.bias ? bias.size() != static_cast<std::size_t>(spec.out_channels)
                : !bias.empty()) {
    throw ShapeError("conv bias length " + std::to_string(bias.size()) +
                     " does not match spec");
  }
}

Shape conv_out_shape(const Shape& in, const ConvSpec& spec) {
  const int oh = spec.out_extent(in.h);
  const int ow = spec.out_extent(in.w);
  if (oh < 1 || ow < 1) {
    throw ShapeError("conv output would be empty for input " + in.str());
  }
  return Shape{in.n, spec.out_channels, oh, ow};
}

constexpr int kTile = 128;
constexpr int kOutBlock = 8;

// acc[i][t] = sum_kk w[i * K + kk] * rows[kk][t], kk ascending.
template <int OB>
void accumulate_block(const float* const* rows, const float* w, int K,
                      float (*acc)[kTile]) {
  for (int i = 0; i < OB; ++i) std::fill_n(acc[i], kTile, 0.0f);
  for (int kk = 0; kk < K; ++kk) {
    const float* row = rows[kk];
    for (int i = 0; i < OB; ++i) {
      const float wv = w[static_cast<std::size_t>(i) * K + kk];
      float* a = acc[i];
      for (int t = 0; t < kTile; ++t) a[t] += wv * row[t];
    }
  }
}

void accumulate_any(const float* const* rows, const float* w, int K, int ob,
                    float (*acc)[kTile]) {
  switch (ob) {
    case 8: accumulate_block<8>(rows, w, K, acc); break;
    case 7: accumulate_block<7>(rows, w, K, acc); break;
    case 6: accumulate_block<6>(rows, w, K, acc); break;
    case 5: accumulate_block<5>(rows, w, K, acc); break;
    case 4: accumulate_block<4>(rows, w, K, acc); break;
    case 3: accumulate_block<3>(rows, w, K, acc); break;
    case 2: accumulate_block<2>(rows, w, K, acc); break;
    default: accumulate_block<1>(rows, w, K, acc); break;
  }
}

}  // namespace

Tensor conv2d_direct(const Tensor& input, const Tensor& weights,
                     std::span<const float> bias, const ConvSpec& spec) {
  check_conv_args(input, weights, bias, spec);
  const Shape in = input.shape();
  const Shape os = conv_out_shape(in, spec);
  Tensor out(os, 0.0f);
  const int cin_g = spec.in_channels / spec.groups;
  const int cout_g = spec.out_channels / spec.groups;
  const int pad = spec.padding();
  for (int n = 0; n < os.n; ++n) {
    for (int oc = 0; oc < os.c; ++oc) {
      const int g = oc / cout_g;
      for (int oy = 0; oy < os.h; ++oy) {
        for (int ox = 0; ox < os.w; ++ox) {
          float acc = 0.0f;
          for (int ci = 0; ci < cin_g; ++ci) {
            for (int ky = 0; ky < spec.kernel; ++ky) {
              const int iy = oy * spec.stride - pad + ky * spec.dilation;
              if (iy < 0 || iy >= in.h) continue;
              for (int kx = 0; kx < spec.kernel; ++kx) {
                const int ix = ox * spec.stride - pad + kx * spec.dilation;
                if (ix < 0 || ix >= in.w) continue;
                acc += weights.at(oc, ci, ky, kx) *
                       input.at(n, g * cin_g + ci, iy, ix);
              }
            }
          }
          if (spec.bias) acc += bias[oc];
          out.at(n, oc, oy, ox) = acc;
        }
      }
    }
  }
  return out;
}

Tensor conv2d_fast(const Tensor& input, const Tensor& weights,
                   std::span<const float> bias, const ConvSpec& spec,
                   int threads) {
  check_conv_args(input, weights, bias, spec);
  const Shape in = input.shape();
  const Shape os = conv_out_shape(in, spec);
  Tensor out(os, 0.0f);

  const int k = spec.kernel;
  const int cin_g = spec.in_channels / spec.groups;
  const int cout_g = spec.out_channels / spec.groups;
  const int K = cin_g * k * k;
  const int P = os.h * os.w;
  const int pad = spec.padding();
  const bool pointwise = (k == 1 && spec.stride == 1);
  const int tiles = (P + kTile - 1) / kTile;
  const std::size_t items =
      static_cast<std::size_t>(os.n) * spec.groups * tiles;
  const float* wdata = weights.data().data();

  parallel_for(items, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<float> col(static_cast<std::size_t>(K) * kTile);
    std::vector<const float*> rows(K);
    alignas(64) float acc[kOutBlock][kTile];

    for (std::size_t item = begin; item < end; ++item) {
      const int tile = static_cast<int>(item % tiles);
      const int g = static_cast<int>((item / tiles) % spec.groups);
      const int n = static_cast<int>(item / tiles / spec.groups);
      const int p0 = tile * kTile;
      const int T = std::min(kTile, P - p0);

      if (pointwise && T == kTile) {
        for (int ci = 0; ci < cin_g; ++ci) {
          rows[ci] = input.plane(n, g * cin_g + ci) + p0;
        }
      } else {
        for (int ci = 0; ci < cin_g; ++ci) {
          const float* src = input.plane(n, g * cin_g + ci);
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int kk = (ci * k + ky) * k + kx;
              float* dst = col.data() + static_cast<std::size_t>(kk) * kTile;
              int oy = p0 / os.w;
              int ox = p0 % os.w;
              for (int t = 0; t < T; ++t) {
                const int iy = oy * spec.stride - pad + ky * spec.dilation;
                const int ix = ox * spec.stride - pad + kx * spec.dilation;
                dst[t] = (iy >= 0 && iy < in.h && ix >= 0 && ix < in.w)
                             ? src[static_cast<std::size_t>(iy) * in.w + ix]
                             : 0.0f;
                if (++ox == os.w) {
                  ox = 0;
                  ++oy;
                }
              }
              std::fill(dst + T, dst + kTile, 0.0f);
              rows[kk] = dst;
            }
          }
        }
      }

      for (int o0 = 0; o0 < cout_g; o0 += kOutBlock) {
        const int ob = std::min(kOutBlock, cout_g - o0);
        const int oc0 = g * cout_g + o0;
        accumulate_any(rows.data(), wdata + static_cast<std::size_t>(oc0) * K,
                       K, ob, acc);
        for (int i = 0; i < ob; ++i) {
          float* dst = out.plane(n, oc0 + i) + p0;
          if (spec.bias) {
            const float b = bias[oc0 + i];
            for (int t = 0; t < T; ++t) dst[t] = acc[i][t] + b;
          } else {
            std::copy_n(acc[i], T, dst);
          }
        }
      }
    }
  });
  return out;
}

ConvSpec branch_spec(const ConvSpec& total, int branches, int dilation) {
  if (branches < 1 || total.groups % branches != 0 ||
      total.in_channels % branches != 0 || total.out_channels % branches != 0) {
    throw SpecError("cannot split groups=" + std::to_string(total.groups) +
                    " evenly into " + std::to_string(branches) + " branches");
  }
  ConvSpec b = total;
  b.in_channels = total.in_channels / branches;
  b.out_channels = total.out_channels / branches;
  b.groups = total.groups / branches;
  b.dilation = dilation;
  return b;
}

Tensor multi_dilation_group_conv(const Tensor& input,
                                 std::span<const Tensor> branch_weights,
                                 std::span<const int> dilations,
                                 const ConvSpec& spec, int threads) {
  const int branches = static_cast<int>(dilations.size());
  if (branches == 0 || branch_weights.size() != dilations.size()) {
    throw SpecError("multi-dilation conv needs one weight tensor per dilation");
  }
  if (spec.bias) throw SpecError("multi-dilation conv has no bias");
  spec.validate();
  if (input.shape().c != spec.in_channels) {
    throw ShapeError("multi-dilation conv input has " +
                     std::to_string(input.shape().c) + " channels, expected " +
                     std::to_string(spec.in_channels));
  }
  if (branches == 1) {
    return conv2d_fast(input, branch_weights[0], {},
                       branch_spec(spec, 1, dilations[0]), threads);
  }
  std::vector<Tensor> outs;
  outs.reserve(branches);
  for (int b = 0; b < branches; ++b) {
    const ConvSpec bs = branch_spec(spec, branches, dilations[b]);
    Tensor part =
        slice_channels(input, b * bs.in_channels, (b + 1) * bs.in_channels);
    outs.push_back(conv2d_fast(part, branch_weights[b], {}, bs, threads));
  }
  return concat_channels(outs);
}

Tensor batchnorm_infer(const Tensor& input, std::span<const float> gamma,
                       std::span<const float> beta, std::span<const float> mean,
                       std::span<const float> var, float eps) {
  const Shape s = input.shape();
  const auto c = static_cast<std::size_t>(s.c);
  if (gamma.size() != c || beta.size() != c || mean.size() != c ||
      var.size() != c) {
    throw ShapeError("batchnorm parameter length does not match " +
                     std::to_string(s.c) + " channels");
  }
  Tensor out(s, 0.0f);
  for (int ch = 0; ch < s.c; ++ch) {
    if (var[ch] < 0.0f) throw ValueError("batchnorm variance must be >= 0");
    const float scale = gamma[ch] / std::sqrt(var[ch] + eps);
    const float m = mean[ch];
    const float b = beta[ch];
    for (int n = 0; n < s.n; ++n) {
      const float* x = input.plane(n, ch);
      float* y = out.plane(n, ch);
      for (std::size_t i = 0; i < s.plane(); ++i) y[i] = (x[i] - m) * scale + b;
    }
  }
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = 1.0f / (1.0f + std::exp(-v));
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  Tensor out = a;
  auto o = out.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
  return out;
}

Tensor avgpool2x2(const Tensor& input) {
  const Shape s = input.shape();
  const int oh = (s.h + 1) / 2;
  const int ow = (s.w + 1) / 2;
  Tensor out(Shape{s.n, s.c, oh, ow}, 0.0f);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* x = input.plane(n, c);
      float* y = out.plane(n, c);
      for (int oy = 0; oy < oh; ++oy) {
        const int y0 = 2 * oy;
        const int y1 = std::min(y0 + 2, s.h);
        for (int ox = 0; ox < ow; ++ox) {
          const int x0 = 2 * ox;
          const int x1 = std::min(x0 + 2, s.w);
          float sum = 0.0f;
          for (int iy = y0; iy < y1; ++iy) {
            for (int ix = x0; ix < x1; ++ix) {
              sum += x[static_cast<std::size_t>(iy) * s.w + ix];
            }
          }
          y[static_cast<std::size_t>(oy) * ow + ox] =
              sum / static_cast<float>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  const Shape s = input.shape();
  Tensor out(Shape{s.n, s.c, 1, 1}, 0.0f);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* x = input.plane(n, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) sum += x[i];
      out.at(n, c, 0, 0) = static_cast<float>(sum / static_cast<double>(s.plane()));
    }
  }
  return out;
}

Tensor se_block(const Tensor& input, const Tensor& w1, std::span<const float> b1,
                const Tensor& w2, std::span<const float> b2) {
  const Shape s = input.shape();
  const int reduced = w1.shape().n;
  if (w1.shape() != Shape{reduced, s.c, 1, 1} ||
      w2.shape() != Shape{s.c, reduced, 1, 1} ||
      b1.size() != static_cast<std::size_t>(reduced) ||
      b2.size() != static_cast<std::size_t>(s.c)) {
    throw ShapeError("squeeze-excite parameters do not match " +
                     std::to_string(s.c) + " channels");
  }
  const Tensor pooled = global_avg_pool(input);
  Tensor out(s, 0.0f);
  std::vector<float> hidden(reduced);
  for (int n = 0; n < s.n; ++n) {
    for (int r = 0; r < reduced; ++r) {
      float acc = 0.0f;
      for (int c = 0; c < s.c; ++c) acc += w1.at(r, c, 0, 0) * pooled.at(n, c, 0, 0);
      acc += b1[r];
      hidden[r] = acc > 0.0f ? acc : 0.0f;
    }
    for (int c = 0; c < s.c; ++c) {
      float acc = 0.0f;
      for (int r = 0; r < reduced; ++r) acc += w2.at(c, r, 0, 0) * hidden[r];
      acc += b2[c];
      const float gate = 1.0f / (1.0f + std::exp(-acc));
      const float* x = input.plane(n, c);
      float* y = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) y[i] = x[i] * gate;
    }
  }
  return out;
}

namespace {

struct Tap {
  int lo;
  int hi;
  float w_lo;
  float w_hi;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(src);
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    const float frac = static_cast<float>(src - lo);
    taps[d] = Tap{lo, hi, 1.0f - frac, frac};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be >= 1");
  const Shape s = input.shape();
  const auto ty = bilinear_taps(s.h, out_h);
  const auto tx = bilinear_taps(s.w, out_w);
  Tensor out(Shape{s.n, s.c, out_h, out_w}, 0.0f);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* x = input.plane(n, c);
      float* y = out.plane(n, c);
      for (int oy = 0; oy < out_h; ++oy) {
        const float* r0 = x + static_cast<std::size_t>(ty[oy].lo) * s.w;
        const float* r1 = x + static_cast<std::size_t>(ty[oy].hi) * s.w;
        const float a0 = ty[oy].w_lo;
        const float a1 = ty[oy].w_hi;
        float* dst = y + static_cast<std::size_t>(oy) * out_w;
        for (int ox = 0; ox < out_w; ++ox) {
          const Tap& t = tx[ox];
          dst[ox] = a0 * (t.w_lo * r0[t.lo] + t.w_hi * r0[t.hi]) +
                    a1 * (t.w_lo * r1[t.lo] + t.w_hi * r1[t.hi]);
        }
      }
    }
  }
  return out;
}

Tensor bilinear_upsample(const Tensor& input, int factor) {
  if (factor != 2 && factor != 4) {
    throw SpecError("upsample factor must be 2 or 4, got " +
                    std::to_string(factor));
  }
  return bilinear_resize(input, input.shape().h * factor,
                         input.shape().w * factor);
}

}  // namespace regseg
