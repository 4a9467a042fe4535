#include "dshift/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dshift/error.hpp"

namespace dshift {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError(path.string(), "cannot open for reading");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

Tensor from_interleaved(const unsigned char* pixels, std::size_t height,
                        std::size_t width, std::size_t channels) {
  Tensor image(1, 3, height, width);
  constexpr float inv255 = 1.0f / 255.0f;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const unsigned char* px = pixels + (y * width + x) * channels;
      for (std::size_t c = 0; c < 3; ++c) {
        const unsigned char v = channels == 1 ? px[0] : px[c];
        image.at(0, c, y, x) = static_cast<float>(v) * inv255;
      }
    }
  }
  return image;
}

unsigned char quantize(float v) {
  const float scaled = std::round(v * 255.0f);
  return static_cast<unsigned char>(std::clamp(scaled, 0.0f, 255.0f));
}

std::vector<unsigned char> to_interleaved(const Tensor& image, std::size_t channels) {
  std::vector<unsigned char> out(image.h() * image.w() * channels);
  for (std::size_t y = 0; y < image.h(); ++y) {
    for (std::size_t x = 0; x < image.w(); ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t src_c = image.c() == 1 ? 0 : c;
        out[(y * image.w() + x) * channels + c] = quantize(image.at(0, src_c, y, x));
      }
    }
  }
  return out;
}

// --- PNM -------------------------------------------------------------------

// Skips whitespace and '#' comments, then parses an unsigned decimal.
std::size_t pnm_number(const std::vector<unsigned char>& bytes, std::size_t& pos,
                       const std::filesystem::path& path) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
    throw FileError(path.string(), "malformed PNM header");
  }
  std::size_t value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
    if (value > (1u << 20)) throw FileError(path.string(), "PNM dimension too large");
    ++pos;
  }
  return value;
}

Tensor load_pnm(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw FileError(path.string(), "not a binary PPM/PGM (P6/P5) file");
  }
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  const std::size_t width = pnm_number(bytes, pos, path);
  const std::size_t height = pnm_number(bytes, pos, path);
  const std::size_t maxval = pnm_number(bytes, pos, path);
  if (maxval != 255) throw FileError(path.string(), "only 8-bit PNM (maxval 255) is supported");
  if (width == 0 || height == 0) throw FileError(path.string(), "empty image");
  ++pos;  // single whitespace byte before the raster
  const std::size_t needed = width * height * channels;
  if (bytes.size() < pos + needed) throw FileError(path.string(), "truncated PNM raster");
  return from_interleaved(bytes.data() + pos, height, width, channels);
}

void write_pnm(const Tensor& image, const std::filesystem::path& path, bool gray) {
  const std::size_t channels = gray ? 1 : 3;
  const auto pixels = to_interleaved(image, channels);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError(path.string(), "cannot open for writing");
  out << (gray ? "P5\n" : "P6\n") << image.w() << ' ' << image.h() << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw FileError(path.string(), "write failed");
}

// --- PNG (libpng simplified API) --------------------------------------------

Tensor load_png(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    const std::string reason = png.message;
    png_image_free(&png);
    throw FileError(path.string(), "PNG decode failed: " + reason);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    const std::string reason = png.message;
    png_image_free(&png);
    throw FileError(path.string(), "PNG decode failed: " + reason);
  }
  return from_interleaved(pixels.data(), png.height, png.width, 3);
}

void write_png(const Tensor& image, const std::filesystem::path& path) {
  const auto pixels = to_interleaved(image, 3);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.w());
  png.height = static_cast<png_uint_32>(image.h());
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string reason = png.message;
    png_image_free(&png);
    throw FileError(path.string(), "PNG encode failed: " + reason);
  }
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

Tensor load_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".ppm" || ext == ".pgm") return load_pnm(path);
  throw FileError(path.string(), "unsupported image container '" + ext + "'");
}

void write_image(const Tensor& image, const std::filesystem::path& path) {
  if (image.n() != 1 || (image.c() != 3 && image.c() != 1)) {
    throw ShapeError("write_image", "image shape",
                     "expected 1x3xHxW or 1x1xHxW, got " + image.shape().str());
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    write_png(image, path);
  } else if (ext == ".ppm") {
    write_pnm(image, path, false);
  } else if (ext == ".pgm") {
    write_pnm(image, path, true);
  } else {
    throw FileError(path.string(), "unsupported image container '" + ext + "'");
  }
}

}  // namespace dshift
