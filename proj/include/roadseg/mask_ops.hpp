#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace roadseg {

// 8-bit RGB image, row-major, channels interleaved (r,g,b per pixel).
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int height, int width, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

  // Throws FormatError unless `channels` is 3.
  static RgbImage from_interleaved(int height, int width, int channels,
                                   std::span<const std::uint8_t> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

  std::uint8_t* pixel(int row, int col) { return &data_[offset(row, col)]; }
  const std::uint8_t* pixel(int row, int col) const { return &data_[offset(row, col)]; }
  void set_pixel(int row, int col, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  std::span<const std::uint8_t> bytes() const { return data_; }
  std::span<std::uint8_t> bytes() { return data_; }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t offset(int row, int col) const {
    return (static_cast<std::size_t>(row) * width_ + col) * 3;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

// H x W grid over {0,1}; 1 = road.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0);

  // Throws DomainError if any value is not 0 or 1.
  static BinaryMask from_values(int height, int width, std::span<const std::uint8_t> values);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  std::uint8_t at(int row, int col) const { return data_[index(row, col)]; }
  void set(int row, int col, bool on) { data_[index(row, col)] = on ? 1 : 0; }

  std::span<const std::uint8_t> values() const { return data_; }
  std::size_t count_ones() const;

  bool same_shape(const BinaryMask& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width_ + col; }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

// Class color in a color-coded label image plus per-channel tolerance.
struct ColorSpec {
  int r = 0;
  int g = 0;
  int b = 0;
  int tolerance = 0;

  // Throws ParameterError if a channel or the tolerance leaves [0,255].
  void validate() const;
  bool matches(const std::uint8_t* rgb) const;
  bool operator==(const ColorSpec&) const = default;
};

enum class ElementShape { square, cross, disk };

struct StructuringElement {
  ElementShape shape = ElementShape::square;
  int radius = 1;

  void validate() const;
  bool contains(int dy, int dx) const;
};

BinaryMask binarize(const RgbImage& label, const ColorSpec& spec);

// Out-of-bounds pixels count as 0.
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& elem);

BinaryMask merge_masks(const BinaryMask& road, const BinaryMask& lane_dilated);

// merge_masks(road, dilate(lane, elem)).
BinaryMask repair_lane_artifacts(const BinaryMask& road, const BinaryMask& lane,
                                 const StructuringElement& elem);

// Blends masked pixels toward `tint` (its tolerance is ignored). Channel
// values round half up.
RgbImage overlay(const RgbImage& image, const BinaryMask& mask, const ColorSpec& tint,
                 double alpha);

// Center-aligned nearest-neighbor resampling; keeps the mask binary.
BinaryMask resize_nearest(const BinaryMask& mask, int height, int width);

}  // namespace roadseg
