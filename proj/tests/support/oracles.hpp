#pragma once

// Reference implementations used only by tests. They avoid the library's
// own helpers so a shared bug cannot make both sides agree.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "roadseg/mask_ops.hpp"
#include "roadseg/metrics.hpp"

namespace oracle {

// Plain fraction with a zero-denominator-free constructor; compared by
// cross multiplication, never reduced.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  bool equals(const roadseg::metrics::Ratio& r) const {
    return static_cast<unsigned __int128>(num) * r.den() == static_cast<unsigned __int128>(r.num()) * den;
  }
};

struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct Report {
  Fraction accuracy, precision, recall, f1, iou_road, iou_background, miou;
  Counts counts;
};

// Tally by set enumeration: road index sets of pred and gt, intersections
// and unions counted explicitly.
Report enumerate(const roadseg::BinaryMask& pred, const roadseg::BinaryMask& gt);
Report from_counts(const Counts& c);

// True iff every field of `actual` equals the oracle exactly.
bool matches(const roadseg::metrics::MetricsReport& actual, const Report& expected, std::string* why = nullptr);

// out(p) = max of in(p - d) over footprint offsets d, out-of-range = 0.
roadseg::BinaryMask neighborhood_max(const roadseg::BinaryMask& in, roadseg::ElementShape shape, int radius);

// Per-pixel |channel - spec| <= tolerance on all three channels.
roadseg::BinaryMask binarize_by_pixel(const roadseg::RgbImage& image, int r, int g, int b, int tolerance);

// 4-connected components of pixels equal to `value`.
int count_components(const roadseg::BinaryMask& m, std::uint8_t value);

roadseg::BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double density = 0.5);

// Mean binary cross-entropy of sigmoid(x), evaluated in long double.
long double bce_reference(const std::vector<double>& logits, const std::vector<double>& targets);

}  // namespace oracle
