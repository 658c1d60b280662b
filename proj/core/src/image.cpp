#include "s3mamba/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace s3 {

Tensor Image::to_tensor() const { return Tensor::from({channels, height, width}, data); }

Image Image::from_tensor(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("Image::from_tensor: expected [C,H,W], got " + shape_str(t.shape()));
  Image img(t.dim(0), t.dim(1), t.dim(2));
  std::copy(t.values().begin(), t.values().end(), img.data.begin());
  return img;
}

Image Image::crop(std::size_t top, std::size_t left, std::size_t h, std::size_t w) const {
  if (top + h > height || left + w > width) throw std::out_of_range("Image::crop: window outside image");
  Image out(channels, h, w);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = at(c, top + y, left + x);
  return out;
}

void clamp01(Image& img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
}

std::vector<unsigned char> quantize8(const Image& img) {
  // Interleaved RGB rows.
  std::vector<unsigned char> bytes(img.height * img.width * img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        bytes[(y * img.width + x) * img.channels + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  return bytes;
}

namespace {

Image from_interleaved(const unsigned char* bytes, std::size_t h, std::size_t w, std::size_t stride_channels) {
  Image img(3, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = bytes[(y * w + x) * stride_channels + c] / 255.0;
  return img;
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image decode_ppm(const std::vector<unsigned char>& buf, const std::string& name) {
  std::size_t pos = 2;
  auto skip_ws = [&] {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(buf[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_ws();
    long v = 0;
    bool any = false;
    while (pos < buf.size() && std::isdigit(buf[pos])) {
      v = v * 10 + (buf[pos++] - '0');
      any = true;
      if (v > 1'000'000) throw ImageIoError("malformed PPM header in '" + name + "'");
    }
    if (!any) throw ImageIoError("malformed PPM header in '" + name + "'");
    return v;
  };
  const long w = read_int(), h = read_int(), maxval = read_int();
  if (w <= 0 || h <= 0) throw ImageIoError("malformed PPM header in '" + name + "'");
  if (maxval != 255) throw ImageIoError("unsupported PPM maxval " + std::to_string(maxval) + " in '" + name + "'");
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw ImageIoError("malformed PPM header in '" + name + "'");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (buf.size() - pos < need) throw ImageIoError("truncated PPM data in '" + name + "'");
  return from_interleaved(buf.data() + pos, static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3);
}

struct PngReadSource {
  const std::vector<unsigned char>* buf;
  std::size_t pos;
};

void png_read_from_buffer(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
  if (src->pos + n > src->buf->size()) png_error(png, "truncated PNG data");
  std::memcpy(out, src->buf->data() + src->pos, n);
  src->pos += n;
}

[[noreturn]] void png_throw(png_structp, png_const_charp msg) { throw ImageIoError(msg); }
void png_quiet(png_structp, png_const_charp) {}

Image decode_png(const std::vector<unsigned char>& buf, const std::string& name) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_quiet);
  if (!png) throw ImageIoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  PngReadSource src{&buf, 0};
  png_set_read_fn(png, &src, png_read_from_buffer);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  const int interlace = png_get_interlace_type(png, info);
  if (depth != 8) throw ImageIoError("unsupported PNG bit depth " + std::to_string(depth) + " in '" + name + "'");
  if (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_RGB_ALPHA) {
    throw ImageIoError("unsupported PNG color type " + std::to_string(color) + " in '" + name + "'");
  }
  if (interlace != PNG_INTERLACE_NONE) throw ImageIoError("interlaced PNG not supported: '" + name + "'");
  const std::size_t ch = color == PNG_COLOR_TYPE_RGB_ALPHA ? 4 : 3;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h * ch);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return from_interleaved(pixels.data(), h, w, ch);
}

void encode_png(const std::filesystem::path& path, const Image& img) {
  const auto bytes = quantize8(img);
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw ImageIoError("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_quiet);
  if (!png) throw ImageIoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * img.width * 3));
  }
  png_write_end(png, nullptr);
}

void encode_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write '" + path.string() + "'");
  const auto bytes = quantize8(img);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageIoError("write failed for '" + path.string() + "'");
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const auto buf = read_all(path);
  static const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (buf.size() >= 8 && std::equal(kPngSig, kPngSig + 8, buf.begin())) return decode_png(buf, path.string());
  if (buf.size() >= 2 && buf[0] == 'P' && buf[1] == '6') return decode_ppm(buf, path.string());
  throw ImageIoError("unrecognized image format: '" + path.string() + "'");
}

void save_image(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3) throw ImageIoError("save_image: only 3-channel images are supported");
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    encode_png(path, img);
  } else if (ext == ".ppm") {
    encode_ppm(path, img);
  } else {
    throw ImageIoError("save_image: unsupported extension '" + ext + "'");
  }
}

}  // namespace s3
