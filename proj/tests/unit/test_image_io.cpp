#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "regseg/errors.hpp"
#include "regseg/image_io.hpp"

using namespace regseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("regseg_io_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST_CASE("red PPM with identity normalisation") {
  TempDir dir;
  const fs::path p = dir.path / "red.ppm";
  std::string ppm = "P6\n# comment\n2 2\n255\n";
  for (int i = 0; i < 4; ++i) ppm += std::string("\xff\x00\x00", 3);
  write_bytes(p, ppm);
  const Tensor t = load_image(p, Normalization{{0, 0, 0}, {1, 1, 1}});
  CHECK(t.shape() == Shape{1, 3, 2, 2});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      CHECK(t.at(0, 0, y, x) == 1.0f);
      CHECK(t.at(0, 1, y, x) == 0.0f);
      CHECK(t.at(0, 2, y, x) == 0.0f);
    }
}

TEST_CASE("default normalisation") {
  Image img{1, 1, 3, {255, 0, 128}};
  const Tensor t = image_to_tensor(img);
  CHECK(t.at(0, 0, 0, 0) == doctest::Approx((1.0 - 0.485) / 0.229));
  CHECK(t.at(0, 1, 0, 0) == doctest::Approx((0.0 - 0.456) / 0.224));
  CHECK(t.at(0, 2, 0, 0) == doctest::Approx((128 / 255.0 - 0.406) / 0.225));
  Image gray{1, 2, 1, {0, 255}};
  const Tensor g = image_to_tensor(gray, Normalization{{0, 0, 0}, {1, 1, 1}});
  CHECK(g.at(0, 2, 0, 1) == 1.0f);
}

TEST_CASE("label maps round trip through PNG and PGM") {
  TempDir dir;
  ClassMap m(3, 5);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<std::uint8_t>(i * 7 % 19);
  m.data[4] = 255;
  for (const char* name : {"label.png", "label.pgm"}) {
    save_label(dir.path / name, m);
    CHECK(load_label(dir.path / name) == m);
  }
}

TEST_CASE("RGB PNG round trip and full-size images") {
  TempDir dir;
  Image img{1024, 2048, 3, {}};
  img.pixels.resize(static_cast<std::size_t>(1024) * 2048 * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 31);
  write_image(dir.path / "big.png", img);
  CHECK(read_image(dir.path / "big.png") == img);
  CHECK(load_image(dir.path / "big.png").shape() == Shape{1, 3, 1024, 2048});
}

TEST_CASE("unsupported inputs") {
  TempDir dir;
  write_bytes(dir.path / "text.png", "hello world");
  CHECK_THROWS_AS(read_image(dir.path / "text.png"), FormatError);
  write_bytes(dir.path / "ascii.ppm", "P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS(read_image(dir.path / "ascii.ppm"), FormatError);
  write_bytes(dir.path / "deep.pgm", "P5\n1 1\n65535\n\0\0");
  CHECK_THROWS_AS(read_image(dir.path / "deep.pgm"), FormatError);
  write_bytes(dir.path / "short.ppm", "P6\n4 4\n255\nabc");
  CHECK_THROWS_AS(read_image(dir.path / "short.ppm"), FormatError);
  CHECK_THROWS_AS(read_image(dir.path / "missing.png"), IoError);

  Image rgb{2, 2, 3, std::vector<std::uint8_t>(12, 1)};
  write_image(dir.path / "rgb.png", rgb);
  CHECK_THROWS_AS(load_label(dir.path / "rgb.png"), FormatError);
}

TEST_CASE("palettes and colour output") {
  TempDir dir;
  const Palette def = default_palette();
  CHECK(def.size() == 19);
  CHECK(def.at(0) == Rgb{128, 64, 128});
  write_bytes(dir.path / "pal.txt", "# id r g b\n0 1 2 3\n\n5 255 0 10  # road\n");
  const Palette p = load_palette(dir.path / "pal.txt");
  CHECK(p.size() == 2);
  CHECK(p.at(5) == Rgb{255, 0, 10});
  write_bytes(dir.path / "bad.txt", "0 1 2\n");
  CHECK_THROWS_AS(load_palette(dir.path / "bad.txt"), FormatError);
  write_bytes(dir.path / "range.txt", "0 1 2 300\n");
  CHECK_THROWS_AS(load_palette(dir.path / "range.txt"), FormatError);

  ClassMap m(1, 3);
  m.data = {0, 5, 9};
  save_color(dir.path / "color.png", m, p);
  const Image img = read_image(dir.path / "color.png");
  CHECK(img.pixels == std::vector<std::uint8_t>{1, 2, 3, 255, 0, 10, 0, 0, 0});
}
