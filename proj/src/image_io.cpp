#include "llem/image_io.hpp"

#include <png.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

namespace llem {
namespace {

struct PngImageGuard {
  png_image* image;
  ~PngImageGuard() { png_image_free(image); }
};

std::string describe_format(png_uint_32 format) {
  std::string s;
  s += (format & PNG_FORMAT_FLAG_COLOR) ? "color" : "grayscale";
  if (format & PNG_FORMAT_FLAG_ALPHA) s += "+alpha";
  if (format & PNG_FORMAT_FLAG_LINEAR) s += ", 16-bit";
  if (format & PNG_FORMAT_FLAG_COLORMAP) s += ", palette";
  return s;
}

Image finish_read(png_image& png, const std::string& origin) {
  if (png.format != PNG_FORMAT_RGB) {
    throw FormatError(origin + ": unsupported PNG (" + describe_format(png.format) +
                      "); only 8-bit RGB is accepted");
  }
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr) == 0) {
    throw FormatError(origin + ": " + png.message);
  }
  Image out(static_cast<Index>(png.height), static_cast<Index>(png.width), 3);
  float* dst = out.data();
  for (std::size_t i = 0; i < buffer.size(); ++i) dst[i] = static_cast<float>(buffer[i]) / 255.0f;
  return out;
}

}  // namespace

std::vector<std::uint8_t> quantize_rgb8(const Image& image) {
  if (image.channels() != 3) {
    throw DimensionError("PNG output requires 3 channels, got " + image.shape().str());
  }
  const Image clamped = clamp01(image);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(clamped.size()));
  const float* src = clamped.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(src[i] * 255.0f));
  }
  return bytes;
}

Image load_image(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  PngImageGuard guard{&png};
  if (png_image_begin_read_from_file(&png, path.string().c_str()) == 0) {
    throw FormatError(path.string() + ": " + png.message);
  }
  return finish_read(png, path.string());
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  PngImageGuard guard{&png};
  if (png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()) == 0) {
    throw FormatError(std::string("PNG buffer: ") + png.message);
  }
  return finish_read(png, "PNG buffer");
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  const auto pixels = quantize_rgb8(image);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  PngImageGuard guard{&png};

  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&png, nullptr, &size, 0, pixels.data(), 0, nullptr) == 0) {
    throw FormatError(std::string("PNG encode: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (png_image_write_to_memory(&png, out.data(), &size, 0, pixels.data(), 0, nullptr) == 0) {
    throw FormatError(std::string("PNG encode: ") + png.message);
  }
  out.resize(size);
  return out;
}

void save_image(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace llem
