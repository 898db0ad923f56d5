#include "regseg/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "regseg/errors.hpp"

namespace regseg {

namespace {

using File = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  auto* msg = static_cast<std::string*>(png_get_error_ptr(png));
  *msg = message;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

Image read_png(std::FILE* f, const std::filesystem::path& path) {
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Image img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": " + error);
  }
  png_init_io(png, f);
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int type = png_get_color_type(png, info);
  if (depth != 8 && !(type == PNG_COLOR_TYPE_PALETTE && depth <= 8)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": unsupported bit depth " + std::to_string(depth));
  }
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(std::FILE* f, const Image& img, const std::filesystem::path& path) {
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": " + error);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.pixels.data()) +
              static_cast<std::size_t>(y) * img.width * img.channels;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads the next whitespace-separated header token, skipping comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      if (!tok.empty()) break;
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else {
      tok += static_cast<char>(c);
    }
  }
  return tok;
}

int pnm_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = pnm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used == tok.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw FormatError(path.string() + ": bad PNM header field '" + tok + "'");
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P5" && magic != "P6") {
    throw FormatError(path.string() + ": only binary PGM (P5) and PPM (P6) are supported");
  }
  Image img;
  img.channels = magic == "P6" ? 3 : 1;
  img.width = pnm_int(in, path);
  img.height = pnm_int(in, path);
  const int maxval = pnm_int(in, path);
  if (maxval != 255) {
    throw FormatError(path.string() + ": unsupported maxval " + std::to_string(maxval));
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  File f = open_file(path, "rb");
  unsigned char sig[8] = {};
  const std::size_t got = std::fread(sig, 1, sizeof sig, f.get());
  if (got == sizeof sig && png_sig_cmp(sig, 0, sizeof sig) == 0) {
    std::rewind(f.get());
    return read_png(f.get(), path);
  }
  if (got >= 2 && sig[0] == 'P') {
    f.reset();
    return read_pnm(path);
  }
  throw FormatError(path.string() + ": not a PNG, PPM or PGM file");
}

void write_image(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ValueError("images must have 1 or 3 channels");
  }
  if (image.pixels.size() !=
      static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw SizeError("pixel buffer does not match image size");
  }
  const std::string ext = lower_extension(path);
  if (ext == ".ppm" || ext == ".pgm") {
    write_pnm(path, image);
    return;
  }
  File f = open_file(path, "wb");
  write_png(f.get(), image, path);
}

Tensor image_to_tensor(const Image& image, const Normalization& norm) {
  Tensor t(Shape{1, 3, image.height, image.width}, 0.0f);
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  for (int c = 0; c < 3; ++c) {
    float* dst = t.plane(0, c);
    const int src_c = image.channels == 3 ? c : 0;
    for (std::size_t i = 0; i < plane; ++i) {
      const float v = image.pixels[i * image.channels + src_c] / 255.0f;
      dst[i] = (v - norm.mean[c]) / norm.std[c];
    }
  }
  return t;
}

Tensor load_image(const std::filesystem::path& path, const Normalization& norm) {
  return image_to_tensor(read_image(path), norm);
}

ClassMap load_label(const std::filesystem::path& path) {
  Image img = read_image(path);
  if (img.channels != 1) {
    throw FormatError(path.string() + ": label maps must be single-channel");
  }
  ClassMap map;
  map.height = img.height;
  map.width = img.width;
  map.data = std::move(img.pixels);
  return map;
}

void save_label(const std::filesystem::path& path, const ClassMap& map) {
  write_image(path, Image{map.height, map.width, 1, map.data});
}

Palette default_palette() {
  return {{0, {128, 64, 128}},  {1, {244, 35, 232}},  {2, {70, 70, 70}},
          {3, {102, 102, 156}}, {4, {190, 153, 153}}, {5, {153, 153, 153}},
          {6, {250, 170, 30}},  {7, {220, 220, 0}},   {8, {107, 142, 35}},
          {9, {152, 251, 152}}, {10, {70, 130, 180}}, {11, {220, 20, 60}},
          {12, {255, 0, 0}},    {13, {0, 0, 142}},    {14, {0, 0, 70}},
          {15, {0, 60, 100}},   {16, {0, 80, 100}},   {17, {0, 0, 230}},
          {18, {119, 11, 32}}};
}

Palette load_palette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Palette p;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    int id, r, g, b;
    if (!(ls >> id)) continue;
    std::string rest;
    if (!(ls >> r >> g >> b) || (ls >> rest) || id < 0 || id > 255 || r < 0 || r > 255 ||
        g < 0 || g > 255 || b < 0 || b > 255) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 'class_id R G B'");
    }
    p[id] = Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                static_cast<std::uint8_t>(b)};
  }
  return p;
}

Image colorize(const ClassMap& map, const Palette& palette) {
  Image img{map.height, map.width, 3, {}};
  img.pixels.resize(map.data.size() * 3, 0);
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    const auto it = palette.find(map.data[i]);
    if (it == palette.end()) continue;
    for (int c = 0; c < 3; ++c) img.pixels[i * 3 + c] = it->second[c];
  }
  return img;
}

void save_color(const std::filesystem::path& path, const ClassMap& map,
                const Palette& palette) {
  write_image(path, colorize(map, palette));
}

}  // namespace regseg
