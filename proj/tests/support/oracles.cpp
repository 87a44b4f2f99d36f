#include "support/oracles.hpp"

#include <cmath>
#include <queue>
#include <set>
#include <sstream>

namespace oracle {

namespace {

std::set<std::size_t> road_set(const roadseg::BinaryMask& m) {
  std::set<std::size_t> s;
  const auto v = m.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 1) s.insert(i);
  }
  return s;
}

// Fraction with a documented fallback when the denominator is zero.
Fraction ratio_or(std::uint64_t num, std::uint64_t den, Fraction fallback) {
  if (den == 0) return fallback;
  return {num, den};
}

}  // namespace

Report enumerate(const roadseg::BinaryMask& pred, const roadseg::BinaryMask& gt) {
  const auto p = road_set(pred);
  const auto g = road_set(gt);
  const std::size_t n = pred.size();
  std::size_t both = 0;
  for (auto i : p) both += g.count(i);
  Counts c;
  c.tp = both;
  c.fp = p.size() - both;
  c.fn = g.size() - both;
  c.tn = n - (p.size() + g.size() - both);
  return from_counts(c);
}

Report from_counts(const Counts& c) {
  Report r;
  r.counts = c;
  const std::uint64_t n = c.tp + c.fp + c.fn + c.tn;
  r.accuracy = {c.tp + c.tn, n};
  r.precision = ratio_or(c.tp, c.tp + c.fp, {1, 1});
  r.recall = ratio_or(c.tp, c.tp + c.fn, {1, 1});
  // F1 = 2PR/(P+R) expanded over the raw fractions.
  const auto& P = r.precision;
  const auto& R = r.recall;
  const std::uint64_t f1_num = 2 * P.num * R.num;
  const std::uint64_t f1_den = P.num * R.den + R.num * P.den;
  r.f1 = f1_den == 0 ? Fraction{0, 1} : Fraction{f1_num, f1_den};
  r.iou_road = ratio_or(c.tp, c.tp + c.fp + c.fn, {1, 1});
  r.iou_background = ratio_or(c.tn, c.tn + c.fp + c.fn, {1, 1});
  r.miou = {r.iou_road.num * r.iou_background.den + r.iou_background.num * r.iou_road.den,
            2 * r.iou_road.den * r.iou_background.den};
  return r;
}

bool matches(const roadseg::metrics::MetricsReport& a, const Report& e, std::string* why) {
  std::ostringstream msg;
  auto check = [&](const char* name, const roadseg::metrics::Ratio& got, const Fraction& want) {
    if (!want.equals(got)) msg << name << " got " << got << " want " << want.num << "/" << want.den << "; ";
  };
  check("accuracy", a.pixel_accuracy, e.accuracy);
  check("precision", a.precision, e.precision);
  check("recall", a.recall, e.recall);
  check("f1", a.f1, e.f1);
  check("iou_road", a.iou_road, e.iou_road);
  check("iou_background", a.iou_background, e.iou_background);
  check("miou", a.miou, e.miou);
  if (a.counts.tp != e.counts.tp || a.counts.fp != e.counts.fp || a.counts.fn != e.counts.fn ||
      a.counts.tn != e.counts.tn) {
    msg << "counts differ; ";
  }
  if (why) *why = msg.str();
  return msg.str().empty();
}

roadseg::BinaryMask neighborhood_max(const roadseg::BinaryMask& in, roadseg::ElementShape shape, int radius) {
  auto inside = [&](int dy, int dx) {
    switch (shape) {
      case roadseg::ElementShape::square: return std::max(std::abs(dy), std::abs(dx)) <= radius;
      case roadseg::ElementShape::cross: return (dy == 0 || dx == 0) && std::abs(dy) + std::abs(dx) <= radius;
      case roadseg::ElementShape::disk: return dy * dy + dx * dx <= radius * radius;
    }
    return false;
  };
  roadseg::BinaryMask out(in.height(), in.width());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      std::uint8_t best = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (!inside(dy, dx)) continue;
          const int sy = y - dy;
          const int sx = x - dx;
          if (sy < 0 || sx < 0 || sy >= in.height() || sx >= in.width()) continue;
          best = std::max(best, in.at(sy, sx));
        }
      }
      out.set(y, x, best != 0);
    }
  }
  return out;
}

roadseg::BinaryMask binarize_by_pixel(const roadseg::RgbImage& image, int r, int g, int b, int tolerance) {
  roadseg::BinaryMask out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto* p = image.pixel(y, x);
      out.set(y, x,
              std::abs(p[0] - r) <= tolerance && std::abs(p[1] - g) <= tolerance &&
                  std::abs(p[2] - b) <= tolerance);
    }
  }
  return out;
}

int count_components(const roadseg::BinaryMask& m, std::uint8_t value) {
  std::vector<char> seen(m.size(), 0);
  int components = 0;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * m.width() + x;
      if (seen[i] || m.at(y, x) != value) continue;
      ++components;
      std::queue<std::pair<int, int>> q;
      q.push({y, x});
      seen[i] = 1;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop();
        const int dy[] = {1, -1, 0, 0};
        const int dx[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k];
          const int nx = cx + dx[k];
          if (ny < 0 || nx < 0 || ny >= m.height() || nx >= m.width()) continue;
          const std::size_t j = static_cast<std::size_t>(ny) * m.width() + nx;
          if (seen[j] || m.at(ny, nx) != value) continue;
          seen[j] = 1;
          q.push({ny, nx});
        }
      }
    }
  }
  return components;
}

roadseg::BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double density) {
  roadseg::BinaryMask m(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      m.set(y, x, static_cast<double>(rng() >> 11) * 0x1.0p-53 < density);
    }
  }
  return m;
}

long double bce_reference(const std::vector<double>& logits, const std::vector<double>& targets) {
  long double sum = 0.0L;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const long double x = logits[i];
    const long double y = targets[i];
    // -[y log s(x) + (1-y) log(1 - s(x))], with s(x) = 1/(1+e^-x)
    const long double log_s = -std::log1p(std::exp(-x));
    const long double log_1ms = -std::log1p(std::exp(x));
    sum += -(y * log_s + (1.0L - y) * log_1ms);
  }
  return sum / static_cast<long double>(logits.size());
}

}  // namespace oracle
