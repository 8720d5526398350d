#ifndef BMVAE_DATASET_HPP_
#define BMVAE_DATASET_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmvae/errors.hpp"
#include "bmvae/rng.hpp"

namespace bmvae
{

struct ImageShape
{
  int width = 0;
  int height = 0;
  int channels = 1;

  int size() const { return width * height * channels; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// Images are flattened row-major, channels interleaved, values in [0, 1].
struct Dataset
{
  std::vector<Eigen::VectorXd> images;
  ImageShape shape;
  std::map<std::string, std::vector<int>> attributes; // name -> 0/1 per image

  std::size_t size() const { return images.size(); }

  void validate() const
  {
    detail::require(shape.size() > 0, "dataset image shape must be positive");
    for (const auto& img : images)
    {
      detail::require(img.size() == shape.size(), "dataset images must all have width*height*channels entries");
      detail::require(img.minCoeff() >= 0.0 && img.maxCoeff() <= 1.0, "pixel values must lie in [0, 1]");
    }
    for (const auto& [name, labels] : attributes)
    {
      detail::require(labels.size() == images.size(), "attribute '" + name + "' has the wrong number of labels");
      for (int v : labels)
        detail::require(v == 0 || v == 1, "attribute labels must be 0 or 1");
    }
  }

  // Columns [first, first + count) of the given order as a D x count matrix.
  Eigen::MatrixXd batch(const std::vector<std::size_t>& order, std::size_t first, std::size_t count) const
  {
    Eigen::MatrixXd x(shape.size(), static_cast<Eigen::Index>(count));
    for (std::size_t c = 0; c < count; ++c)
      x.col(static_cast<Eigen::Index>(c)) = images[order[first + c]];
    return x;
  }
};

// ---------------------------------------------------------------------------------------
// Synthetic attributed images

inline const std::array<std::string, 5> synth_attribute_names = {"top_bar", "bottom_bar", "left_bar", "right_bar",
                                                                 "center_box"};

struct SynthSpec
{
  int size = 1000;
  int side = 16;
  std::uint64_t seed = 0;
  double attribute_probability = 0.5;
};

/*
 * Square single-channel images built from five independent attributes: bars of
 * thickness side/8 along each edge and a centred box covering [3s/8, 5s/8). Attribute
 * pixels are 1, background 0, then uniform noise in [0, 0.05] is added and the result
 * clipped to [0, 1]. Image n draws from stream (seed, n).
 */
inline Dataset synth_dataset(const SynthSpec& spec)
{
  detail::require(spec.side >= 8, "synthetic images need side >= 8");
  detail::require(spec.size >= 0, "synthetic dataset size must be nonnegative");
  detail::require(spec.attribute_probability >= 0.0 && spec.attribute_probability <= 1.0,
                  "attribute probability must be in [0, 1]");
  const int s = spec.side;
  const int t = s / 8;
  const int lo = 3 * s / 8, hi = 5 * s / 8;

  Dataset ds;
  ds.shape = {s, s, 1};
  for (const auto& name : synth_attribute_names)
    ds.attributes[name].reserve(spec.size);

  for (int n = 0; n < spec.size; ++n)
  {
    engine rng = make_stream(spec.seed, static_cast<std::uint64_t>(n));
    std::array<bool, 5> on{};
    for (std::size_t a = 0; a < on.size(); ++a)
    {
      on[a] = uniform01(rng) < spec.attribute_probability;
      ds.attributes[synth_attribute_names[a]].push_back(on[a] ? 1 : 0);
    }
    Eigen::VectorXd img(s * s);
    for (int r = 0; r < s; ++r)
      for (int c = 0; c < s; ++c)
      {
        const bool lit = (on[0] && r < t) || (on[1] && r >= s - t) || (on[2] && c < t) || (on[3] && c >= s - t) ||
                         (on[4] && r >= lo && r < hi && c >= lo && c < hi);
        img[r * s + c] = std::min(1.0, (lit ? 1.0 : 0.0) + uniform(rng, 0.0, 0.05));
      }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

// Mean intensity of rows [0, side/8), the top_bar region.
inline double top_region_mean(const Eigen::VectorXd& image, const ImageShape& shape)
{
  const int t = std::max(1, shape.height / 8);
  double sum = 0.0;
  for (int r = 0; r < t; ++r)
    for (int c = 0; c < shape.width * shape.channels; ++c)
      sum += image[r * shape.width * shape.channels + c];
  return sum / (t * shape.width * shape.channels);
}

// ---------------------------------------------------------------------------------------
// IDX (MNIST container)

namespace detail
{

inline std::vector<unsigned char> read_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw format_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& path)
{
  if (bytes.size() < offset + 4)
    throw format_error(path + ": truncated header at byte offset " + std::to_string(offset) + " (file has " +
                       std::to_string(bytes.size()) + " bytes)");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

} // namespace detail

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

// Pixels scaled by 1/255. Labels, when given, become attributes digit_0 .. digit_9.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path = {})
{
  const auto bytes = detail::read_file(images_path);
  const auto magic = detail::read_be32(bytes, 0, images_path);
  if (magic != idx_images_magic)
    throw format_error(images_path + ": bad magic number at byte offset 0 (expected 0x00000803)");
  const std::uint64_t count = detail::read_be32(bytes, 4, images_path);
  const std::uint64_t rows = detail::read_be32(bytes, 8, images_path);
  const std::uint64_t cols = detail::read_be32(bytes, 12, images_path);
  const std::uint64_t expected = 16 + count * rows * cols;
  if (bytes.size() < expected)
    throw format_error(images_path + ": truncated payload starting at byte offset 16: expected " +
                       std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));

  Dataset ds;
  ds.shape = {static_cast<int>(cols), static_cast<int>(rows), 1};
  const std::size_t d = rows * cols;
  ds.images.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n)
  {
    Eigen::VectorXd img(static_cast<Eigen::Index>(d));
    for (std::size_t p = 0; p < d; ++p)
      img[static_cast<Eigen::Index>(p)] = bytes[16 + n * d + p] / 255.0;
    ds.images.push_back(std::move(img));
  }

  if (!labels_path.empty())
  {
    const auto lb = detail::read_file(labels_path);
    if (detail::read_be32(lb, 0, labels_path) != idx_labels_magic)
      throw format_error(labels_path + ": bad magic number at byte offset 0 (expected 0x00000801)");
    const std::uint64_t n_labels = detail::read_be32(lb, 4, labels_path);
    if (n_labels != count)
      throw format_error(labels_path + ": label count " + std::to_string(n_labels) + " at byte offset 4 does not match " +
                         std::to_string(count) + " images");
    if (lb.size() < 8 + n_labels)
      throw format_error(labels_path + ": truncated payload starting at byte offset 8: expected " +
                         std::to_string(8 + n_labels) + " bytes, got " + std::to_string(lb.size()));
    for (int digit = 0; digit < 10; ++digit)
    {
      auto& labels = ds.attributes["digit_" + std::to_string(digit)];
      labels.reserve(count);
      for (std::uint64_t n = 0; n < count; ++n)
        labels.push_back(lb[8 + n] == digit ? 1 : 0);
    }
  }
  return ds;
}

} // namespace bmvae

#endif
