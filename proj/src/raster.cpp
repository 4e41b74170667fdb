#include "orts/raster.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace orts {

RasterImage::RasterImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw Error("RasterImage: negative dimensions");
  }
  data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels);
  for (std::size_t i = 0; i < data_.size(); i += kChannels) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
    throw Error(std::string("png: ") + image.message);
  }
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error("png: " + msg);
  }

  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  RasterImage img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::uint8_t* px = rgba.data() + (static_cast<std::size_t>(y) * width + x) * 4;
      const unsigned a = px[3];
      for (int c = 0; c < 3; ++c) {
        // alpha over white, rounded
        const unsigned v = px[c] * a + 255U * (255U - a);
        img.at(x, y, c) = static_cast<std::uint8_t>((v + 127U) / 255U);
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  if (img.empty()) {
    throw Error("png: cannot encode an empty image");
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (png_image_write_get_memory_size(image, size, 0, img.data().data(), 0, nullptr) == 0) {
    throw Error(std::string("png: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (png_image_write_to_memory(&image, out.data(), &size, 0, img.data().data(), 0, nullptr) == 0) {
    throw Error(std::string("png: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RasterImage read_png(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_png(const RasterImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace orts
