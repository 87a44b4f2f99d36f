#pragma once

#include <filesystem>

#include "roadseg/mask_ops.hpp"

namespace roadseg {

// Reads a color image file. Throws IoError when the file is missing or
// undecodable and FormatError when it does not have exactly 3 channels.
RgbImage read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const RgbImage& image);

// Masks on disk are single-channel 8-bit images holding 0 (background) and
// 255 (road).
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace roadseg
