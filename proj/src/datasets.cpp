#include "roadseg/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <set>

#include "roadseg/errors.hpp"
#include "roadseg/image_io.hpp"
#include "roadseg/random.hpp"

namespace roadseg::data {

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (item.is_regular_file() && is_image_file(item.path())) files.push_back(item.path());
  }
  return files;
}

// Label file with the same stem as the image, any supported extension.
std::optional<fs::path> find_label(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".png", ".jpg", ".jpeg"}) {
    fs::path candidate = dir / (stem + ext);
    if (fs::is_regular_file(candidate)) return candidate;
  }
  return std::nullopt;
}

// "um_000012" -> "um_road_000012".
std::string kitti_label_stem(const std::string& stem) {
  const auto pos = stem.rfind('_');
  if (pos == std::string::npos) return stem + "_road";
  return stem.substr(0, pos) + "_road" + stem.substr(pos);
}

constexpr float kImagenetMean[3] = {0.485F, 0.456F, 0.406F};
constexpr float kImagenetStd[3] = {0.229F, 0.224F, 0.225F};

}  // namespace

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "kitti_road") return DatasetKind::kitti_road;
  if (name == "comma10k") return DatasetKind::comma10k;
  if (name == "synthetic") return DatasetKind::synthetic;
  throw ParameterError("unknown dataset kind '" + std::string(name) +
                       "' (expected kitti_road, comma10k or synthetic)");
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kitti_road: return "kitti_road";
    case DatasetKind::comma10k: return "comma10k";
    case DatasetKind::synthetic: return "synthetic";
  }
  return "unknown";
}

const ManifestEntry& DatasetManifest::find(std::string_view sample_id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), sample_id,
                             [](const ManifestEntry& e, std::string_view id) { return e.sample_id < id; });
  if (it == entries.end() || it->sample_id != sample_id) {
    throw ManifestError("sample '" + std::string(sample_id) + "' not in dataset '" + dataset_id + "'");
  }
  return *it;
}

DatasetManifest load_manifest(const fs::path& root, DatasetKind kind, std::string dataset_id) {
  if (!fs::is_directory(root)) throw ManifestError("dataset root not found: " + root.string());

  fs::path image_dir;
  fs::path label_dir;
  if (kind == DatasetKind::kitti_road) {
    const fs::path base = fs::is_directory(root / "training") ? root / "training" : root;
    image_dir = base / "image_2";
    label_dir = base / "gt_image_2";
  } else {
    image_dir = root / "imgs";
    label_dir = root / "masks";
  }

  DatasetManifest manifest;
  manifest.dataset_id = dataset_id.empty() ? root.filename().string() : std::move(dataset_id);
  for (const auto& image : list_images(image_dir)) {
    const std::string stem = image.stem().string();
    const std::string label_stem = kind == DatasetKind::kitti_road ? kitti_label_stem(stem) : stem;
    auto label = find_label(label_dir, label_stem);
    if (!label) {
      throw ManifestError("sample '" + stem + "' has no label file (expected " +
                          (label_dir / (label_stem + ".png")).string() + ")");
    }
    manifest.entries.push_back({stem, image, *label});
  }
  if (manifest.entries.empty()) {
    throw EmptyDatasetError("no images found under " + image_dir.string());
  }
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.sample_id < b.sample_id; });
  for (std::size_t i = 1; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].sample_id == manifest.entries[i - 1].sample_id) {
      throw ManifestError("duplicate sample id '" + manifest.entries[i].sample_id + "'");
    }
  }
  return manifest;
}

Part parse_part(std::string_view name) {
  if (name == "train") return Part::train;
  if (name == "val") return Part::val;
  if (name == "test") return Part::test;
  throw ParameterError("unknown split part '" + std::string(name) + "'");
}

std::string to_string(Part part) {
  switch (part) {
    case Part::train: return "train";
    case Part::val: return "val";
    case Part::test: return "test";
  }
  return "unknown";
}

void SplitRatios::validate() const {
  if (train <= 0.0 || val <= 0.0 || test <= 0.0) {
    throw ParameterError("split ratios must all be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw ParameterError("split ratios must sum to 1.0");
  }
}

SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios) {
  ratios.validate();
  if (n < 3) {
    throw SplitError("cannot split " + std::to_string(n) + " sample(s) into train/val/test");
  }
  SplitSizes sizes;
  sizes.train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  sizes.val = static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n)));
  if (sizes.train + sizes.val > n) {
    throw SplitError("split ratios overflow for " + std::to_string(n) + " samples");
  }
  sizes.test = n - sizes.train - sizes.val;
  if (sizes.train == 0 || sizes.val == 0 || sizes.test == 0) {
    throw SplitError("cannot populate all three parts with " + std::to_string(n) + " samples");
  }
  return sizes;
}

std::vector<std::string> SplitAssignment::ids(Part part) const {
  std::vector<std::string> out;
  for (const auto& [id, p] : parts) {
    if (p == part) out.push_back(id);
  }
  return out;
}

SplitSizes SplitAssignment::sizes() const {
  SplitSizes s;
  for (const auto& [id, p] : parts) {
    switch (p) {
      case Part::train: ++s.train; break;
      case Part::val: ++s.val; break;
      case Part::test: ++s.test; break;
    }
  }
  return s;
}

nlohmann::json SplitAssignment::to_json() const {
  nlohmann::json assignment = nlohmann::json::object();
  for (const auto& [id, p] : parts) assignment[id] = to_string(p);
  return {{"seed", seed},
          {"ratios", {{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}}},
          {"assignment", assignment}};
}

SplitAssignment SplitAssignment::from_json(const nlohmann::json& j) {
  SplitAssignment out;
  try {
    out.seed = j.at("seed").get<std::uint64_t>();
    const auto& r = j.at("ratios");
    out.ratios = {r.at("train").get<double>(), r.at("val").get<double>(), r.at("test").get<double>()};
    for (const auto& [id, p] : j.at("assignment").items()) out.parts[id] = parse_part(p.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed split file: ") + e.what());
  }
  return out;
}

void SplitAssignment::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split file: " + path.string());
  out << to_json().dump(2) << '\n';
}

SplitAssignment SplitAssignment::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read split file: " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("malformed split file " + path.string() + ": " + e.what());
  }
}

SplitAssignment split(const DatasetManifest& manifest, std::uint64_t seed, const SplitRatios& ratios) {
  const SplitSizes sizes = split_sizes(manifest.size(), ratios);
  std::vector<std::string> ids;
  ids.reserve(manifest.size());
  for (const auto& e : manifest.entries) ids.push_back(e.sample_id);
  std::sort(ids.begin(), ids.end());

  std::mt19937_64 engine(seed);
  deterministic_shuffle(std::span<std::string>(ids), engine);

  SplitAssignment out;
  out.seed = seed;
  out.ratios = ratios;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Part part = i < sizes.train ? Part::train
                      : i < sizes.train + sizes.val ? Part::val
                                                    : Part::test;
    out.parts[ids[i]] = part;
  }
  return out;
}

torch::Tensor mask_to_tensor(const BinaryMask& mask) {
  auto t = torch::empty({1, mask.height(), mask.width()}, torch::kFloat32);
  auto* dst = t.data_ptr<float>();
  const auto values = mask.values();
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] = values[i] ? 1.0F : 0.0F;
  return t;
}

torch::Tensor image_to_tensor(const RgbImage& image) {
  const auto bytes = image.bytes();
  auto hwc = torch::from_blob(const_cast<std::uint8_t*>(bytes.data()),
                              {image.height(), image.width(), 3}, torch::kUInt8);
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

BinaryMask load_label_mask(const ManifestEntry& entry, const SampleOptions& options) {
  if (options.label_encoding == LabelEncoding::binary_mask) return read_mask(entry.label_path);
  const RgbImage label = read_rgb(entry.label_path);
  BinaryMask road = binarize(label, options.road_color);
  if (options.lane_repair) {
    const BinaryMask lane = binarize(label, options.lane_repair->lane_color);
    road = repair_lane_artifacts(road, lane, options.lane_repair->element);
  }
  return road;
}

LabeledSample load_sample(const ManifestEntry& entry, const SampleOptions& options) {
  if (options.size <= 0) throw ParameterError("sample size must be positive");
  RgbImage image;
  BinaryMask mask;
  try {
    image = read_rgb(entry.image_path);
    mask = load_label_mask(entry, options);
  } catch (const IoError& e) {
    throw IoError("sample '" + entry.sample_id + "': " + e.what());
  } catch (const FormatError& e) {
    throw IoError("sample '" + entry.sample_id + "': " + e.what());
  }
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw ConsistencyError("sample '" + entry.sample_id + "': image is " +
                           std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                           " but label is " + std::to_string(mask.height()) + "x" +
                           std::to_string(mask.width()));
  }

  const int s = options.size;
  torch::Tensor pixels = image_to_tensor(image);
  if (image.height() != s || image.width() != s) {
    namespace F = torch::nn::functional;
    pixels = F::interpolate(pixels.unsqueeze(0), F::InterpolateFuncOptions()
                                                     .size(std::vector<int64_t>{s, s})
                                                     .mode(torch::kBilinear)
                                                     .align_corners(false))
                 .squeeze(0)
                 .clamp(0.0, 1.0)
                 .contiguous();
  }
  if (options.normalization == Normalization::imagenet) {
    auto mean = torch::tensor({kImagenetMean[0], kImagenetMean[1], kImagenetMean[2]}).view({3, 1, 1});
    auto stdev = torch::tensor({kImagenetStd[0], kImagenetStd[1], kImagenetStd[2]}).view({3, 1, 1});
    pixels = ((pixels - mean) / stdev).contiguous();
  }
  return {entry.sample_id, pixels, resize_nearest(mask, s, s)};
}

BatchStream::BatchStream(std::vector<ManifestEntry> entries, SampleOptions options, int batch_size,
                         Order order, std::uint64_t shuffle_seed, StreamOptions stream_options)
    : count_(entries.size()),
      batch_size_(batch_size),
      image_size_(entries.empty() ? 0 : options.size),
      order_(order),
      shuffle_seed_(shuffle_seed),
      workers_(std::max(1, stream_options.workers)),
      cache_enabled_(stream_options.cache) {
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
  for (const auto& e : entries) ids_.push_back(e.sample_id);
  loader_ = [entries = std::move(entries), options](std::size_t i) {
    return load_sample(entries[i], options);
  };
  cache_ = std::make_shared<std::vector<std::optional<LabeledSample>>>(count_);
}

BatchStream BatchStream::from_samples(std::vector<LabeledSample> samples, int batch_size,
                                      Order order, std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
  BatchStream stream;
  stream.count_ = samples.size();
  stream.batch_size_ = batch_size;
  stream.order_ = order;
  stream.shuffle_seed_ = shuffle_seed;
  stream.image_size_ = samples.empty() ? 0 : static_cast<int>(samples.front().image.size(-1));
  for (const auto& s : samples) {
    if (s.image.size(-1) != stream.image_size_) {
      throw ShapeError("all samples in a stream must share one size");
    }
    stream.ids_.push_back(s.sample_id);
  }
  auto shared = std::make_shared<const std::vector<LabeledSample>>(std::move(samples));
  stream.loader_ = [shared](std::size_t i) { return (*shared)[i]; };
  stream.cache_enabled_ = false;
  stream.cache_ = std::make_shared<std::vector<std::optional<LabeledSample>>>(stream.count_);
  return stream;
}

std::size_t BatchStream::batches_per_epoch() const {
  return (count_ + batch_size_ - 1) / static_cast<std::size_t>(batch_size_);
}

std::vector<std::size_t> BatchStream::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(count_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (order_ == Order::shuffled) {
    std::mt19937_64 engine(shuffle_seed_ + epoch);
    deterministic_shuffle(std::span<std::size_t>(order), engine);
  }
  return order;
}

std::vector<std::string> BatchStream::epoch_ids(std::size_t epoch) const {
  std::vector<std::string> out;
  for (auto i : epoch_order(epoch)) out.push_back(ids_[i]);
  return out;
}

LabeledSample BatchStream::sample(std::size_t index) const {
  auto& slot = (*cache_).at(index);
  if (slot) return *slot;
  LabeledSample s = loader_(index);
  if (cache_enabled_) slot = s;
  return s;
}

Batch BatchStream::assemble(std::span<const std::size_t> indices) const {
  std::vector<LabeledSample> loaded(indices.size());
  if (workers_ > 1 && indices.size() > 1) {
    // Each task fills its own slot, so batch order is independent of timing.
    std::vector<std::future<void>> tasks;
    const std::size_t per_worker = (indices.size() + workers_ - 1) / workers_;
    for (std::size_t begin = 0; begin < indices.size(); begin += per_worker) {
      const std::size_t end = std::min(indices.size(), begin + per_worker);
      tasks.push_back(std::async(std::launch::async, [&, begin, end] {
        for (std::size_t k = begin; k < end; ++k) loaded[k] = sample(indices[k]);
      }));
    }
    for (auto& t : tasks) t.get();
  } else {
    for (std::size_t k = 0; k < indices.size(); ++k) loaded[k] = sample(indices[k]);
  }

  Batch batch;
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> masks;
  for (auto& s : loaded) {
    batch.sample_ids.push_back(s.sample_id);
    images.push_back(s.image);
    masks.push_back(mask_to_tensor(s.mask));
  }
  batch.images = torch::stack(images);
  batch.masks = torch::stack(masks);
  return batch;
}

void BatchStream::for_each_batch(std::size_t epoch,
                                 const std::function<void(const Batch&)>& visit) const {
  const auto order = epoch_order(epoch);
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size_) {
    const std::size_t end = std::min(order.size(), begin + batch_size_);
    visit(assemble(std::span<const std::size_t>(order).subspan(begin, end - begin)));
  }
}

BatchStream make_part_stream(const DatasetManifest& manifest, const SplitAssignment& assignment,
                             Part part, const SampleOptions& options, int batch_size,
                             std::uint64_t shuffle_seed, StreamOptions stream_options) {
  std::vector<ManifestEntry> entries;
  for (const auto& id : assignment.ids(part)) entries.push_back(manifest.find(id));
  const Order order = part == Part::train ? Order::shuffled : Order::fixed;
  return BatchStream(std::move(entries), options, batch_size, order, shuffle_seed, stream_options);
}

}  // namespace roadseg::data
