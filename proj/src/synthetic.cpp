#include "roadseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "roadseg/errors.hpp"
#include "roadseg/image_io.hpp"
#include "roadseg/random.hpp"

namespace roadseg::data {

namespace fs = std::filesystem;

namespace {

std::uint8_t clamp_byte(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

struct Blob {
  double cy, cx, ry, rx;
  std::array<int, 3> rgb;
};

struct Scene {
  double horizon;  // row, in pixels
  double top_center, bottom_center;
  double top_width, bottom_width;
  std::vector<Blob> blobs;
};

Scene draw_scene(std::mt19937_64& rng, int size, const SyntheticStyle& style) {
  Scene scene;
  const double s = size;
  scene.horizon = s * uniform_real(rng, style.horizon_min, style.horizon_max);
  scene.top_center = s * (0.5 + uniform_real(rng, -style.center_jitter, style.center_jitter));
  scene.bottom_center = s * (0.5 + uniform_real(rng, -style.center_jitter, style.center_jitter));
  scene.top_width = s * uniform_real(rng, style.top_width_min, style.top_width_max);
  scene.bottom_width = s * uniform_real(rng, style.bottom_width_min, style.bottom_width_max);
  for (int i = 0; i < style.clutter_blobs; ++i) {
    Blob b;
    b.cy = uniform_real(rng, 0.2 * s, 0.9 * s);
    b.cx = uniform_real(rng, 0.0, s);
    b.ry = uniform_real(rng, 0.04 * s, 0.12 * s);
    b.rx = uniform_real(rng, 0.04 * s, 0.12 * s);
    for (int c = 0; c < 3; ++c) b.rgb[c] = uniform_int(rng, 20, 200);
    scene.blobs.push_back(b);
  }
  return scene;
}

}  // namespace

SyntheticStyle SyntheticStyle::highway() {
  SyntheticStyle style;
  style.prefix = "highway";
  return style;
}

SyntheticStyle SyntheticStyle::suburban() {
  SyntheticStyle style;
  style.prefix = "suburban";
  style.road_rgb = {78, 80, 86};
  style.ground_rgb = {60, 135, 50};
  style.sky_rgb = {170, 195, 215};
  style.road_noise = 20;
  style.background_noise = 34;
  style.horizon_min = 0.35;
  style.horizon_max = 0.48;
  style.bottom_width_min = 0.50;
  style.bottom_width_max = 0.75;
  style.top_width_min = 0.05;
  style.top_width_max = 0.12;
  style.clutter_blobs = 5;
  return style;
}

DatasetManifest generate_synthetic(const fs::path& root, int count, int size, std::uint64_t seed,
                                   const SyntheticStyle& style) {
  if (count < 1) throw ParameterError("synthetic dataset needs at least one sample");
  if (size < 16) throw ParameterError("synthetic image size must be >= 16");
  style.road_label.validate();
  style.background_label.validate();
  style.lane_label.validate();

  std::error_code ec;
  fs::create_directories(root / "imgs", ec);
  fs::create_directories(root / "masks", ec);
  if (ec || !fs::is_directory(root / "imgs") || !fs::is_directory(root / "masks")) {
    throw IoError("cannot create synthetic dataset under " + root.string());
  }

  std::mt19937_64 rng(seed);
  const double scale = size / 128.0;
  const int dash = std::max(2, static_cast<int>(std::lround(8 * scale)));

  for (int n = 0; n < count; ++n) {
    const Scene scene = draw_scene(rng, size, style);
    RgbImage image(size, size);
    RgbImage label(size, size, clamp_byte(style.background_label.r),
                   clamp_byte(style.background_label.g), clamp_byte(style.background_label.b));

    for (int y = 0; y < size; ++y) {
      const double yc = y + 0.5;
      for (int x = 0; x < size; ++x) {
        const double xc = x + 0.5;
        int rgb[3];
        bool road = false;
        bool lane = false;
        if (yc >= scene.horizon) {
          const double t = (yc - scene.horizon) / (size - scene.horizon);
          const double center = scene.top_center + (scene.bottom_center - scene.top_center) * t;
          const double half = 0.5 * (scene.top_width + (scene.bottom_width - scene.top_width) * t);
          road = std::abs(xc - center) <= half;
          const double stripe = 0.5 + 1.5 * t * scale;
          const int dash_index = static_cast<int>((yc - scene.horizon) / dash);
          lane = road && style.lane_markings && std::abs(xc - center) <= stripe &&
                 dash_index % 2 == 0;
        }

        if (lane) {
          const int v = 225 + uniform_int(rng, -10, 10);
          rgb[0] = rgb[1] = rgb[2] = v;
        } else if (road) {
          const int noise = uniform_int(rng, -style.road_noise, style.road_noise);
          for (int c = 0; c < 3; ++c) rgb[c] = style.road_rgb[c] + noise;
        } else {
          const auto& base = yc < scene.horizon ? style.sky_rgb : style.ground_rgb;
          for (int c = 0; c < 3; ++c) {
            rgb[c] = base[c] + uniform_int(rng, -style.background_noise, style.background_noise);
          }
          for (const auto& b : scene.blobs) {
            const double dy = (yc - b.cy) / b.ry;
            const double dx = (xc - b.cx) / b.rx;
            if (dy * dy + dx * dx <= 1.0) {
              for (int c = 0; c < 3; ++c) rgb[c] = b.rgb[c] + (rgb[c] - base[c]) / 2;
            }
          }
        }
        image.set_pixel(y, x, clamp_byte(rgb[0]), clamp_byte(rgb[1]), clamp_byte(rgb[2]));

        const ColorSpec& cls = lane ? style.lane_label : road ? style.road_label : style.background_label;
        label.set_pixel(y, x, clamp_byte(cls.r), clamp_byte(cls.g), clamp_byte(cls.b));
      }
    }

    char name[64];
    std::snprintf(name, sizeof name, "%s_%04d.png", style.prefix.c_str(), n);
    write_rgb(root / "imgs" / name, image);
    write_rgb(root / "masks" / name, label);
  }
  return load_manifest(root, DatasetKind::synthetic, root.filename().string());
}

}  // namespace roadseg::data
