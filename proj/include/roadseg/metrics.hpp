#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "roadseg/mask_ops.hpp"

namespace roadseg::metrics {

// Exact non-negative fraction kept in lowest terms. Every metric is computed
// as a Ratio so dataset-level numbers are free of accumulated rounding.
class Ratio {
 public:
  constexpr Ratio() = default;
  Ratio(std::uint64_t num, std::uint64_t den);

  std::uint64_t num() const { return num_; }
  std::uint64_t den() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend Ratio operator+(const Ratio& a, const Ratio& b);
  friend Ratio operator*(const Ratio& a, const Ratio& b);
  friend Ratio operator/(const Ratio& a, const Ratio& b);
  friend bool operator==(const Ratio& a, const Ratio& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend std::strong_ordering operator<=>(const Ratio& a, const Ratio& b);

 private:
  std::uint64_t num_ = 0;
  std::uint64_t den_ = 1;
};

std::ostream& operator<<(std::ostream& os, const Ratio& r);

// Pixel tallies; the positive class is road.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
  bool operator==(const ConfusionCounts&) const = default;
};

enum class SegClass { road, background };

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

// All of these throw DegenerateInputError when the counts are empty.
// Zero denominators follow fixed conventions: IoU of an empty union is 1,
// precision with no predicted road is 1, recall with no true road is 1,
// and F1 is 0 when precision + recall is 0.
Ratio pixel_accuracy(const ConfusionCounts& c);
Ratio iou(const ConfusionCounts& c, SegClass cls);
Ratio precision(const ConfusionCounts& c);
Ratio recall(const ConfusionCounts& c);
Ratio f1(const ConfusionCounts& c);

struct MetricsReport {
  Ratio pixel_accuracy;
  Ratio precision;
  Ratio recall;
  Ratio f1;
  Ratio iou_road;
  Ratio iou_background;
  Ratio miou;
  ConfusionCounts counts;

  bool operator==(const MetricsReport&) const = default;
};

MetricsReport report(const ConfusionCounts& c);

// Column order shared by every CSV the toolkit writes for reports.
const std::vector<std::string>& report_columns();
// Values in report_columns() order; fractions at fixed 10-digit precision.
std::vector<std::string> report_csv_fields(const MetricsReport& r);

nlohmann::json to_json(const ConfusionCounts& c);
nlohmann::json to_json(const MetricsReport& r);
ConfusionCounts counts_from_json(const nlohmann::json& j);

}  // namespace roadseg::metrics
