#include "camalign/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace camalign {

Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw Error("cannot read png " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw Error("cannot decode png " + path.string() + ": " + msg);
  }
  Image out(static_cast<int>(img.height), static_cast<int>(img.width), 3);
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = buffer[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor3& image) {
  if (image.channels() != 3 && image.channels() != 1) {
    throw ShapeError("write_png expects 1 or 3 channels");
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(image.size());
  auto v = image.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    buffer[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
  }
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error("cannot write png " + path.string() + ": " + img.message);
  }
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height == image.height() && width == image.width()) return image;
  Image out(height, width, image.channels());
  const double sy = static_cast<double>(image.height()) / height;
  const double sx = static_cast<double>(image.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels(); ++c) {
        const double top = image(y0, x0, c) * (1 - wx) + image(y0, x1, c) * wx;
        const double bottom = image(y1, x0, c) * (1 - wx) + image(y1, x1, c) * wx;
        out(y, x, c) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

}  // namespace camalign
