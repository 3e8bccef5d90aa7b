#include "pyrsal/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace pyrsal {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const char* what) {
  throw std::runtime_error(std::string(what) + ": " + path);
}

uint8_t quantize(float v) {
  float c = std::min(std::max(v, 0.0f), 1.0f);
  return uint8_t(std::lrintf(c * 255.0f));
}

void write_png(const std::string& path, const std::vector<uint8_t>& pixels,
               int h, int w, int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(path, "cannot open for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(path, "png writer allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "png write error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<png_bytep>(pixels.data() + std::size_t(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> read_png(const std::string& path, int want_channels,
                              int& h, int& w) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(path, "cannot open for reading");
  uint8_t sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    fail(path, "not a png file");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "png reader allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "png read error");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (want_channels == 3) {
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png);
  } else {
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE)
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);

  h = int(png_get_image_height(png, info));
  w = int(png_get_image_width(png, info));
  if (int(png_get_channels(png, info)) != want_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "unexpected channel count");
  }
  std::vector<uint8_t> pixels(std::size_t(h) * w * want_channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = pixels.data() + std::size_t(y) * w * want_channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

}  // namespace

void save_rgb(const std::string& path, const Tensor<float>& img) {
  if (img.n != 1 || img.c != 3)
    throw std::invalid_argument("save_rgb: expected a (1,3,H,W) image");
  std::vector<uint8_t> px(std::size_t(img.h) * img.w * 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        px[(std::size_t(y) * img.w + x) * 3 + c] = quantize(img.at(0, c, y, x));
  write_png(path, px, img.h, img.w, 3);
}

Tensor<float> load_rgb(const std::string& path) {
  int h = 0, w = 0;
  auto px = read_png(path, 3, h, w);
  Tensor<float> img(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(0, c, y, x) = px[(std::size_t(y) * w + x) * 3 + c] / 255.0f;
  return img;
}

void save_map(const std::string& path, const Tensor<float>& map) {
  if (map.n != 1 || map.c != 1)
    throw std::invalid_argument("save_map: expected a (1,1,H,W) map");
  std::vector<uint8_t> px(std::size_t(map.h) * map.w);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize(map.data[i]);
  write_png(path, px, map.h, map.w, 1);
}

Tensor<float> load_map(const std::string& path) {
  int h = 0, w = 0;
  auto px = read_png(path, 1, h, w);
  Tensor<float> map(1, 1, h, w);
  for (std::size_t i = 0; i < px.size(); ++i) map.data[i] = px[i] / 255.0f;
  return map;
}

}  // namespace pyrsal
