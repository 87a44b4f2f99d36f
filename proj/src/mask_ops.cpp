#include "roadseg/mask_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "roadseg/errors.hpp"

namespace roadseg {

namespace {

void require_dims(int height, int width) {
  if (height <= 0 || width <= 0) {
    throw ShapeError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": mask dimensions differ (" + std::to_string(a.height()) +
                     "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
  }
}

}  // namespace

RgbImage::RgbImage(int height, int width, std::uint8_t r, std::uint8_t g, std::uint8_t b)
    : height_(height), width_(width) {
  require_dims(height, width);
  data_.resize(pixel_count() * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = r;
    data_[i + 1] = g;
    data_[i + 2] = b;
  }
}

RgbImage RgbImage::from_interleaved(int height, int width, int channels,
                                    std::span<const std::uint8_t> data) {
  if (channels != 3) {
    throw FormatError("expected a 3-channel color image, got " + std::to_string(channels) +
                      " channel(s)");
  }
  require_dims(height, width);
  RgbImage image;
  image.height_ = height;
  image.width_ = width;
  if (data.size() != image.pixel_count() * 3) {
    throw FormatError("pixel buffer size does not match image dimensions");
  }
  image.data_.assign(data.begin(), data.end());
  return image;
}

void RgbImage::set_pixel(int row, int col, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  auto* p = pixel(row, col);
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill) : height_(height), width_(width) {
  require_dims(height, width);
  if (fill > 1) throw DomainError("binary mask fill must be 0 or 1");
  data_.assign(static_cast<std::size_t>(height) * width, fill);
}

BinaryMask BinaryMask::from_values(int height, int width, std::span<const std::uint8_t> values) {
  BinaryMask mask(height, width);
  if (values.size() != mask.size()) {
    throw ShapeError("mask value count does not match dimensions");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > 1) throw DomainError("binary mask values must be 0 or 1");
    mask.data_[i] = values[i];
  }
  return mask;
}

std::size_t BinaryMask::count_ones() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

void ColorSpec::validate() const {
  auto in_range = [](int v) { return v >= 0 && v <= 255; };
  if (!in_range(r) || !in_range(g) || !in_range(b) || !in_range(tolerance)) {
    throw ParameterError("color spec values must lie in [0,255]");
  }
}

bool ColorSpec::matches(const std::uint8_t* rgb) const {
  return std::abs(int{rgb[0]} - r) <= tolerance && std::abs(int{rgb[1]} - g) <= tolerance &&
         std::abs(int{rgb[2]} - b) <= tolerance;
}

void StructuringElement::validate() const {
  if (radius < 1) throw ParameterError("structuring element radius must be >= 1");
}

bool StructuringElement::contains(int dy, int dx) const {
  switch (shape) {
    case ElementShape::square:
      return std::abs(dy) <= radius && std::abs(dx) <= radius;
    case ElementShape::cross:
      return (dy == 0 && std::abs(dx) <= radius) || (dx == 0 && std::abs(dy) <= radius);
    case ElementShape::disk:
      return dy * dy + dx * dx <= radius * radius;
  }
  return false;
}

BinaryMask binarize(const RgbImage& label, const ColorSpec& spec) {
  spec.validate();
  BinaryMask mask(label.height(), label.width());
  for (int row = 0; row < label.height(); ++row) {
    for (int col = 0; col < label.width(); ++col) {
      if (spec.matches(label.pixel(row, col))) mask.set(row, col, true);
    }
  }
  return mask;
}

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& elem) {
  elem.validate();
  // Scatter each set pixel over the reflected footprint; every supported
  // element is symmetric so the reflection is the element itself.
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -elem.radius; dy <= elem.radius; ++dy) {
    for (int dx = -elem.radius; dx <= elem.radius; ++dx) {
      if (elem.contains(dy, dx)) offsets.emplace_back(dy, dx);
    }
  }
  BinaryMask out(mask.height(), mask.width());
  for (int row = 0; row < mask.height(); ++row) {
    for (int col = 0; col < mask.width(); ++col) {
      if (!mask.at(row, col)) continue;
      for (auto [dy, dx] : offsets) {
        const int r = row + dy;
        const int c = col + dx;
        if (r >= 0 && r < mask.height() && c >= 0 && c < mask.width()) out.set(r, c, true);
      }
    }
  }
  return out;
}

BinaryMask merge_masks(const BinaryMask& road, const BinaryMask& lane_dilated) {
  require_same_shape(road, lane_dilated, "merge_masks");
  BinaryMask out(road.height(), road.width());
  for (int row = 0; row < road.height(); ++row) {
    for (int col = 0; col < road.width(); ++col) {
      out.set(row, col, road.at(row, col) || lane_dilated.at(row, col));
    }
  }
  return out;
}

BinaryMask repair_lane_artifacts(const BinaryMask& road, const BinaryMask& lane,
                                 const StructuringElement& elem) {
  require_same_shape(road, lane, "repair_lane_artifacts");
  return merge_masks(road, dilate(lane, elem));
}

RgbImage overlay(const RgbImage& image, const BinaryMask& mask, const ColorSpec& tint,
                 double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("overlay alpha must lie in [0,1]");
  }
  tint.validate();
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw ShapeError("overlay: image and mask dimensions differ");
  }
  const int target[3] = {tint.r, tint.g, tint.b};
  RgbImage out = image;
  for (int row = 0; row < image.height(); ++row) {
    for (int col = 0; col < image.width(); ++col) {
      if (!mask.at(row, col)) continue;
      auto* p = out.pixel(row, col);
      for (int c = 0; c < 3; ++c) {
        const double blended = (1.0 - alpha) * p[c] + alpha * target[c];
        p[c] = static_cast<std::uint8_t>(std::clamp(std::floor(blended + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int height, int width) {
  BinaryMask out(height, width);
  if (mask.height() == height && mask.width() == width) return mask;
  for (int row = 0; row < height; ++row) {
    // Integer form of floor((row + 0.5) * src / dst).
    const int src_row = static_cast<int>((2LL * row + 1) * mask.height() / (2LL * height));
    for (int col = 0; col < width; ++col) {
      const int src_col = static_cast<int>((2LL * col + 1) * mask.width() / (2LL * width));
      out.set(row, col, mask.at(src_row, src_col));
    }
  }
  return out;
}

}  // namespace roadseg
