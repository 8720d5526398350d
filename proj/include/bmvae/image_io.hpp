#ifndef BMVAE_IMAGE_IO_HPP_
#define BMVAE_IMAGE_IO_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmvae/dataset.hpp"
#include "bmvae/errors.hpp"

namespace bmvae
{

struct GridLayout
{
  int rows = 1;
  int cols = 1;
  int separator = 2; // white (255) pixels between tiles, none at the border
};

// round(v * 255) after clamping v to [0, 1]
inline std::uint8_t quantize(double v)
{
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct PnmImage
{
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels; // row-major, channels interleaved
};

/*
 * Tiles images row-major into a rows x cols grid with `separator` white pixels between
 * tiles; unused cells stay white. One channel writes binary PGM (P5), three write PPM (P6).
 */
inline PnmImage tile_images(const std::vector<Eigen::VectorXd>& images, const ImageShape& shape, const GridLayout& layout)
{
  detail::require(shape.channels == 1 || shape.channels == 3, "images must have 1 or 3 channels");
  detail::require(shape.width > 0 && shape.height > 0, "image shape must be positive");
  detail::require(layout.rows > 0 && layout.cols > 0 && layout.separator >= 0, "invalid grid layout");
  detail::require(static_cast<std::size_t>(layout.rows) * layout.cols >= images.size(),
                  "grid layout has fewer cells than images");
  for (const auto& img : images)
    detail::require(img.size() == shape.size(), "images must all match the image shape");

  PnmImage out;
  out.channels = shape.channels;
  out.width = layout.cols * shape.width + (layout.cols - 1) * layout.separator;
  out.height = layout.rows * shape.height + (layout.rows - 1) * layout.separator;
  out.pixels.assign(static_cast<std::size_t>(out.width) * out.height * out.channels, 255);
  for (std::size_t n = 0; n < images.size(); ++n)
  {
    const int r0 = static_cast<int>(n / layout.cols) * (shape.height + layout.separator);
    const int c0 = static_cast<int>(n % layout.cols) * (shape.width + layout.separator);
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x)
        for (int ch = 0; ch < shape.channels; ++ch)
          out.pixels[(static_cast<std::size_t>(r0 + y) * out.width + (c0 + x)) * out.channels + ch] =
              quantize(images[n][(y * shape.width + x) * shape.channels + ch]);
  }
  return out;
}

inline void write_pnm(const PnmImage& img, const std::string& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open '" + path + "' for writing");
  out << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out)
    throw std::runtime_error("failed writing '" + path + "'");
}

inline void write_image_grid(const std::vector<Eigen::VectorXd>& images, const ImageShape& shape,
                             const GridLayout& layout, const std::string& path)
{
  write_pnm(tile_images(images, shape, layout), path);
}

// Near-square layout for n tiles.
inline GridLayout square_layout(std::size_t n)
{
  const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
  const int rows = std::max(1, static_cast<int>((n + cols - 1) / cols));
  return {rows, cols, 2};
}

// Binary P5/P6 with maxval 255; comments in the header are skipped.
inline PnmImage read_pnm(const std::string& path)
{
  const auto bytes = detail::read_file(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) {
    throw format_error(path + ": " + what + " at byte offset " + std::to_string(pos));
  };
  auto skip_space = [&] {
    while (pos < bytes.size())
    {
      if (bytes[pos] == '#')
        while (pos < bytes.size() && bytes[pos] != '\n')
          ++pos;
      else if (std::isspace(bytes[pos]))
        ++pos;
      else
        break;
    }
  };
  auto read_int = [&] {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      fail("expected a header integer");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && v < 1000000)
      v = v * 10 + (bytes[pos++] - '0');
    return static_cast<int>(v);
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    fail("not a binary PGM/PPM");
  PnmImage img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  img.width = read_int();
  img.height = read_int();
  if (read_int() != 255)
    fail("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    fail("missing header terminator");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (bytes.size() - pos < n)
    throw format_error(path + ": truncated pixel data starting at byte offset " + std::to_string(pos) + ": expected " +
                       std::to_string(n) + " bytes, got " + std::to_string(bytes.size() - pos));
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

} // namespace bmvae

#endif
