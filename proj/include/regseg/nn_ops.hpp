#pragma once

#include <span>
#include <string>
#include <vector>

#include "regseg/tensor.hpp"

namespace regseg {

// Square 2-D convolution. Padding is always "same"-style:
// pad = dilation * (kernel - 1) / 2 on every side, so stride-1 convs keep the
// resolution and stride-2 convs produce ceil(H / 2).
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int groups = 1;
  bool bias = false;

  int padding() const { return dilation * (kernel - 1) / 2; }
  int out_extent(int in) const {
    return (in + 2 * padding() - dilation * (kernel - 1) - 1) / stride + 1;
  }
  // (out_channels, in_channels / groups, kernel, kernel)
  Shape weight_shape() const;
  // Throws SpecError when the spec is not realisable.
  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// Reference convolution: a plain seven-level loop with a fixed accumulation
// order over (input channel, kernel row, kernel column). Serves as the oracle
// for conv2d_fast. `bias` is empty when spec.bias is false.
Tensor conv2d_direct(const Tensor& input, const Tensor& weights,
                     std::span<const float> bias, const ConvSpec& spec);

// Tiled patch-gather + register-blocked multiply. Each output element is
// accumulated in the same order regardless of tiling or thread count.
Tensor conv2d_fast(const Tensor& input, const Tensor& weights,
                   std::span<const float> bias, const ConvSpec& spec,
                   int threads = 1);

// Group convolution where contiguous runs of groups use different dilation
// rates. The input is split channel-wise into dilations.size() equal parts;
// part i is convolved with branch_weights[i] using groups/branches groups at
// dilations[i], and the results are concatenated. spec.dilation is ignored.
Tensor multi_dilation_group_conv(const Tensor& input,
                                 std::span<const Tensor> branch_weights,
                                 std::span<const int> dilations,
                                 const ConvSpec& spec, int threads = 1);

// Per-branch spec derived from the total spec of a multi-dilation conv.
ConvSpec branch_spec(const ConvSpec& total, int branches, int dilation);

Tensor batchnorm_infer(const Tensor& input, std::span<const float> gamma,
                       std::span<const float> beta, std::span<const float> mean,
                       std::span<const float> var, float eps = 1e-5f);

Tensor relu(const Tensor& input);
Tensor sigmoid(const Tensor& input);
Tensor add(const Tensor& a, const Tensor& b);

// 2x2 window, stride 2. Output extent is ceil(H / 2); windows that hang off
// an odd border average only their valid cells.
Tensor avgpool2x2(const Tensor& input);

// (n, c, 1, 1) per-channel spatial mean.
Tensor global_avg_pool(const Tensor& input);

// Squeeze-and-excitation gate. w1: (r, c, 1, 1), w2: (c, r, 1, 1).
// s = sigmoid(w2 * relu(w1 * gap(x) + b1) + b2); output = x * s per channel.
Tensor se_block(const Tensor& input, const Tensor& w1, std::span<const float> b1,
                const Tensor& w2, std::span<const float> b2);

// Bilinear interpolation with half-pixel centres: the source coordinate of
// destination index d is (d + 0.5) * in / out - 0.5, clamped at the borders.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

// factor must be 2 or 4.
Tensor bilinear_upsample(const Tensor& input, int factor);

}  // namespace regseg
