#include "roadseg/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <ostream>

#include "roadseg/errors.hpp"

namespace roadseg::metrics {

namespace {

using u128 = unsigned __int128;

Ratio reduce(u128 num, u128 den) {
  if (den == 0) throw DomainError("ratio with zero denominator");
  u128 a = num, b = den;
  while (b != 0) {
    const u128 t = a % b;
    a = b;
    b = t;
  }
  const u128 g = a == 0 ? 1 : a;
  num /= g;
  den /= g;
  if (num > UINT64_MAX || den > UINT64_MAX) throw DomainError("ratio overflow");
  return Ratio(static_cast<std::uint64_t>(num), static_cast<std::uint64_t>(den));
}

void require_nonempty(const ConfusionCounts& c) {
  if (c.total() == 0) throw DegenerateInputError("confusion counts are empty (zero pixels)");
}

Ratio ratio_or_one(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? Ratio(1, 1) : Ratio(num, den);
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

}  // namespace

Ratio::Ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw DomainError("ratio with zero denominator");
  const std::uint64_t g = num == 0 ? den : std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

Ratio operator+(const Ratio& a, const Ratio& b) {
  return reduce(u128{a.num_} * b.den_ + u128{b.num_} * a.den_, u128{a.den_} * b.den_);
}

Ratio operator*(const Ratio& a, const Ratio& b) {
  return reduce(u128{a.num_} * b.num_, u128{a.den_} * b.den_);
}

Ratio operator/(const Ratio& a, const Ratio& b) {
  return reduce(u128{a.num_} * b.den_, u128{a.den_} * b.num_);
}

std::strong_ordering operator<=>(const Ratio& a, const Ratio& b) {
  const u128 lhs = u128{a.num_} * b.den_;
  const u128 rhs = u128{b.num_} * a.den_;
  if (lhs < rhs) return std::strong_ordering::less;
  if (lhs > rhs) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

std::ostream& operator<<(std::ostream& os, const Ratio& r) {
  return os << r.num() << '/' << r.den();
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt)) throw ShapeError("confusion: prediction and label dimensions differ");
  ConfusionCounts c;
  const auto p = pred.values();
  const auto g = gt.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]) {
      g[i] ? ++c.tp : ++c.fp;
    } else {
      g[i] ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

Ratio pixel_accuracy(const ConfusionCounts& c) {
  require_nonempty(c);
  return Ratio(c.tp + c.tn, c.total());
}

Ratio iou(const ConfusionCounts& c, SegClass cls) {
  require_nonempty(c);
  const std::uint64_t hit = cls == SegClass::road ? c.tp : c.tn;
  return ratio_or_one(hit, hit + c.fp + c.fn);
}

Ratio precision(const ConfusionCounts& c) {
  require_nonempty(c);
  return ratio_or_one(c.tp, c.tp + c.fp);
}

Ratio recall(const ConfusionCounts& c) {
  require_nonempty(c);
  return ratio_or_one(c.tp, c.tp + c.fn);
}

Ratio f1(const ConfusionCounts& c) {
  const Ratio p = precision(c);
  const Ratio r = recall(c);
  const Ratio sum = p + r;
  if (sum.num() == 0) return Ratio(0, 1);
  return Ratio(2, 1) * p * r / sum;
}

MetricsReport report(const ConfusionCounts& c) {
  require_nonempty(c);
  MetricsReport r;
  r.pixel_accuracy = pixel_accuracy(c);
  r.precision = precision(c);
  r.recall = recall(c);
  r.f1 = f1(c);
  r.iou_road = iou(c, SegClass::road);
  r.iou_background = iou(c, SegClass::background);
  r.miou = (r.iou_road + r.iou_background) * Ratio(1, 2);
  r.counts = c;
  return r;
}

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> columns = {
      "pixel_accuracy", "precision", "recall", "f1", "iou_road", "iou_background",
      "miou",           "tp",        "fp",     "fn", "tn"};
  return columns;
}

std::vector<std::string> report_csv_fields(const MetricsReport& r) {
  return {fixed(r.pixel_accuracy.value()),
          fixed(r.precision.value()),
          fixed(r.recall.value()),
          fixed(r.f1.value()),
          fixed(r.iou_road.value()),
          fixed(r.iou_background.value()),
          fixed(r.miou.value()),
          std::to_string(r.counts.tp),
          std::to_string(r.counts.fp),
          std::to_string(r.counts.fn),
          std::to_string(r.counts.tn)};
}

nlohmann::json to_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"pixel_accuracy", r.pixel_accuracy.value()},
          {"precision", r.precision.value()},
          {"recall", r.recall.value()},
          {"f1", r.f1.value()},
          {"iou_road", r.iou_road.value()},
          {"iou_background", r.iou_background.value()},
          {"miou", r.miou.value()},
          {"counts", to_json(r.counts)}};
}

ConfusionCounts counts_from_json(const nlohmann::json& j) {
  ConfusionCounts c;
  c.tp = j.at("tp").get<std::uint64_t>();
  c.fp = j.at("fp").get<std::uint64_t>();
  c.fn = j.at("fn").get<std::uint64_t>();
  c.tn = j.at("tn").get<std::uint64_t>();
  return c;
}

}  // namespace roadseg::metrics
