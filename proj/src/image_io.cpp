#include "roadseg/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>

#include "roadseg/errors.hpp"

namespace roadseg {

namespace fs = std::filesystem;

namespace {

cv::Mat read_raw(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("file not found: " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IoError("cannot decode image: " + path.string());
  if (raw.depth() != CV_8U) throw FormatError("expected an 8-bit image: " + path.string());
  return raw;
}

void write_raw(const fs::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write image: " + path.string());
}

}  // namespace

RgbImage read_rgb(const fs::path& path) {
  cv::Mat raw = read_raw(path);
  if (raw.channels() != 3) {
    throw FormatError(path.string() + ": expected 3 channels, got " +
                      std::to_string(raw.channels()));
  }
  cv::Mat rgb;
  cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  return RgbImage::from_interleaved(rgb.rows, rgb.cols, 3,
                                    {rgb.data, static_cast<std::size_t>(rgb.total() * 3)});
}

void write_rgb(const fs::path& path, const RgbImage& image) {
  cv::Mat rgb(image.height(), image.width(), CV_8UC3,
              const_cast<std::uint8_t*>(image.bytes().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  write_raw(path, bgr);
}

BinaryMask read_mask(const fs::path& path) {
  cv::Mat raw = read_raw(path);
  if (raw.channels() != 1) {
    throw FormatError(path.string() + ": mask must be single-channel");
  }
  BinaryMask mask(raw.rows, raw.cols);
  for (int row = 0; row < raw.rows; ++row) {
    const auto* src = raw.ptr<std::uint8_t>(row);
    for (int col = 0; col < raw.cols; ++col) {
      if (src[col] == 255) {
        mask.set(row, col, true);
      } else if (src[col] != 0) {
        throw FormatError(path.string() + ": mask values must be 0 or 255");
      }
    }
  }
  return mask;
}

void write_mask(const fs::path& path, const BinaryMask& mask) {
  cv::Mat out(mask.height(), mask.width(), CV_8UC1);
  for (int row = 0; row < mask.height(); ++row) {
    auto* dst = out.ptr<std::uint8_t>(row);
    for (int col = 0; col < mask.width(); ++col) dst[col] = mask.at(row, col) ? 255 : 0;
  }
  write_raw(path, out);
}

}  // namespace roadseg
