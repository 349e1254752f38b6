#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "ssmf/dense.hpp"
#include "ssmf/error.hpp"

namespace ssmf {

// IDX container (the MNIST distribution format): big-endian u32 header
// words, then a raw byte payload. Image files carry magic 0x00000803 and
// count/rows/cols; label files carry 0x00000801 and count.

struct IdxImageSet {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols bytes

  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * rows * cols, rows * cols};
  }
};

namespace detail {

inline std::uint32_t get_u32_be(std::span<const std::uint8_t> bytes,
                                std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace detail

inline IdxImageSet parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16)
    fail(ErrorCode::TruncatedFile, "IDX image stream shorter than its header");
  const std::uint32_t magic = detail::get_u32_be(bytes, 0);
  if (magic != 0x00000803)
    fail(ErrorCode::BadMagic, "expected IDX image magic 0x00000803");
  IdxImageSet set;
  set.count = detail::get_u32_be(bytes, 4);
  set.rows = detail::get_u32_be(bytes, 8);
  set.cols = detail::get_u32_be(bytes, 12);
  const std::size_t expected = set.count * set.rows * set.cols;
  if (bytes.size() < 16 + expected)
    fail(ErrorCode::TruncatedFile, "IDX image payload truncated");
  set.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + expected);
  return set;
}

inline std::vector<std::uint8_t> parse_idx_labels(
    std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8)
    fail(ErrorCode::TruncatedFile, "IDX label stream shorter than its header");
  const std::uint32_t magic = detail::get_u32_be(bytes, 0);
  if (magic != 0x00000801)
    fail(ErrorCode::BadMagic, "expected IDX label magic 0x00000801");
  const std::size_t count = detail::get_u32_be(bytes, 4);
  if (bytes.size() < 8 + count)
    fail(ErrorCode::TruncatedFile, "IDX label payload truncated");
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.begin() + 8 + count);
  for (std::uint8_t v : labels)
    if (v > 9)
      fail(ErrorCode::InvalidLabel,
           "label byte " + std::to_string(int(v)) + " outside 0-9");
  return labels;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Stacks the first `count` images carrying the requested digit as rows of a
/// matrix: center-crop by `crop` pixels on each side, flatten row-major,
/// scale to unit sum. Images whose cropped pixels are all zero cannot be
/// normalized and are skipped in favor of the next match.
inline DenseMatrix build_mnist_matrix(const IdxImageSet& images,
                                      std::span<const std::uint8_t> labels,
                                      int digit, std::size_t count,
                                      std::size_t crop) {
  if (labels.size() != images.count)
    fail(ErrorCode::InvalidDimensions, "image/label counts differ");
  if (digit < 0 || digit > 9) fail(ErrorCode::InvalidLabel, "digit outside 0-9");
  if (2 * crop >= images.rows || 2 * crop >= images.cols)
    fail(ErrorCode::InvalidInput, "crop leaves no pixels");
  const std::size_t out_rows = images.rows - 2 * crop;
  const std::size_t out_cols = images.cols - 2 * crop;
  DenseMatrix v(count, out_rows * out_cols);

  std::size_t taken = 0;
  for (std::size_t i = 0; i < images.count && taken < count; ++i) {
    if (labels[i] != digit) continue;
    const auto img = images.image(i);
    double* row = v.row_ptr(taken);
    double sum = 0.0;
    for (std::size_t a = 0; a < out_rows; ++a)
      for (std::size_t b = 0; b < out_cols; ++b) {
        const double px = img[(a + crop) * images.cols + (b + crop)];
        row[a * out_cols + b] = px;
        sum += px;
      }
    if (sum == 0.0) continue;  // blank after cropping; use the next match
    for (std::size_t j = 0; j < out_rows * out_cols; ++j) row[j] /= sum;
    ++taken;
  }
  if (taken < count)
    fail(ErrorCode::NotEnoughSamples,
         "only " + std::to_string(taken) + " usable images of digit " +
             std::to_string(digit) + ", need " + std::to_string(count));
  return v;
}

}  // namespace ssmf
