#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "roadseg/datasets.hpp"
#include "roadseg/mask_ops.hpp"

namespace roadseg::data {

// Appearance and geometry of a synthetic road scene family. Fractions are
// relative to the image side. The road is a trapezoid from the bottom edge
// up to the horizon.
struct SyntheticStyle {
  std::string prefix = "synth";

  ColorSpec road_label{64, 32, 32, 0};
  ColorSpec background_label{128, 128, 96, 0};
  ColorSpec lane_label{255, 0, 0, 0};

  std::array<int, 3> road_rgb{96, 96, 100};
  std::array<int, 3> ground_rgb{80, 125, 60};
  std::array<int, 3> sky_rgb{150, 185, 225};
  int road_noise = 16;
  int background_noise = 28;

  double horizon_min = 0.40;
  double horizon_max = 0.50;
  double bottom_width_min = 0.70;
  double bottom_width_max = 0.95;
  double top_width_min = 0.10;
  double top_width_max = 0.25;
  double center_jitter = 0.10;

  bool lane_markings = true;
  int clutter_blobs = 3;

  // Wide road, low horizon, light asphalt.
  static SyntheticStyle highway();
  // Narrow road, higher horizon, greener surroundings, darker asphalt.
  static SyntheticStyle suburban();
};

// Writes <root>/imgs/<prefix>_NNNN.png and <root>/masks/<prefix>_NNNN.png
// (comma10k layout) and returns the manifest of the written files.
// Output bytes depend only on (count, size, seed, style).
DatasetManifest generate_synthetic(const std::filesystem::path& root, int count, int size,
                                   std::uint64_t seed, const SyntheticStyle& style = {});

}  // namespace roadseg::data
