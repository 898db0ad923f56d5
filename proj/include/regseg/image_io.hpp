#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "regseg/metrics.hpp"
#include "regseg/tensor.hpp"

namespace regseg {

// 8-bit interleaved pixels.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Image&, const Image&) = default;
};

// PNG (8-bit gray, gray+alpha, RGB, RGBA, palette) and binary PPM/PGM
// (maxval 255). Alpha is dropped. FormatError for anything else.
Image read_image(const std::filesystem::path& path);
// Writes PNG, or PPM/PGM when the extension is .ppm/.pgm.
void write_image(const std::filesystem::path& path, const Image& image);

struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

// Pixels scaled to [0, 1], then (v - mean) / std per channel. Gray images
// are replicated to three channels. Result is (1, 3, H, W).
Tensor image_to_tensor(const Image& image, const Normalization& norm = {});
Tensor load_image(const std::filesystem::path& path, const Normalization& norm = {});

// Single-channel train-id maps, 255 = ignore.
ClassMap load_label(const std::filesystem::path& path);
void save_label(const std::filesystem::path& path, const ClassMap& map);

using Rgb = std::array<std::uint8_t, 3>;
using Palette = std::map<int, Rgb>;

// Cityscapes train-id colours for 0..18.
Palette default_palette();
// Lines "class_id R G B"; '#' starts a comment.
Palette load_palette(const std::filesystem::path& path);
// Classes missing from the palette are drawn black.
Image colorize(const ClassMap& map, const Palette& palette);
void save_color(const std::filesystem::path& path, const ClassMap& map,
                const Palette& palette);

}  // namespace regseg
