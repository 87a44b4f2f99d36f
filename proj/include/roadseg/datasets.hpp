#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "roadseg/mask_ops.hpp"

namespace roadseg::data {

namespace fs = std::filesystem;

enum class DatasetKind { kitti_road, comma10k, synthetic };

DatasetKind parse_dataset_kind(std::string_view name);
std::string to_string(DatasetKind kind);

struct ManifestEntry {
  std::string sample_id;
  fs::path image_path;
  fs::path label_path;

  bool operator==(const ManifestEntry&) const = default;
};

// Entries are sorted by sample_id.
struct DatasetManifest {
  std::string dataset_id;
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
  const ManifestEntry& find(std::string_view sample_id) const;
};

// Layouts:
//   kitti_road  <root>[/training]/image_2/<cat>_<n>.png with labels in
//               gt_image_2/<cat>_road_<n>.png
//   comma10k    <root>/imgs/<name>.png with labels in <root>/masks/<name>.png
//   synthetic   same as comma10k
// Throws ManifestError for an image without a label (naming the sample) and
// EmptyDatasetError when no images are found.
DatasetManifest load_manifest(const fs::path& root, DatasetKind kind,
                              std::string dataset_id = {});

enum class Part { train, val, test };

Part parse_part(std::string_view name);
std::string to_string(Part part);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  void validate() const;
  bool operator==(const SplitRatios&) const = default;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  bool operator==(const SplitSizes&) const = default;
};

// train = round(train_ratio * n), val = round(val_ratio * n), test gets the
// remainder. Throws SplitError if any part would be empty (always so for n < 3).
SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios = {});

struct SplitAssignment {
  std::map<std::string, Part> parts;
  std::uint64_t seed = 0;
  SplitRatios ratios;

  // Sample ids of one part, lexicographic.
  std::vector<std::string> ids(Part part) const;
  SplitSizes sizes() const;

  nlohmann::json to_json() const;
  static SplitAssignment from_json(const nlohmann::json& j);
  void save(const fs::path& path) const;
  static SplitAssignment load(const fs::path& path);

  bool operator==(const SplitAssignment&) const = default;
};

// Seeded Fisher-Yates over the sorted ids; the first `train` ids of the
// shuffled order go to train, the next `val` to val, the rest to test.
SplitAssignment split(const DatasetManifest& manifest, std::uint64_t seed,
                      const SplitRatios& ratios = {});

enum class Normalization {
  unit_range,  // x / 255
  imagenet,    // (x / 255 - mean) / std per channel
};

enum class LabelEncoding {
  color,        // color-coded label image, binarized with the road spec
  binary_mask,  // prepared single-channel 0/255 mask
};

struct LaneRepair {
  ColorSpec lane_color{255, 0, 0, 0};
  StructuringElement element{};
};

struct SampleOptions {
  int size = 512;
  ColorSpec road_color{};
  std::optional<LaneRepair> lane_repair;
  Normalization normalization = Normalization::unit_range;
  LabelEncoding label_encoding = LabelEncoding::color;
};

struct LabeledSample {
  std::string sample_id;
  torch::Tensor image;  // float32, 3 x S x S
  BinaryMask mask;      // S x S
};

// Label mask at the label's native resolution: binarized and, when
// configured, lane-repaired. Also the mask that the prepare stage caches.
BinaryMask load_label_mask(const ManifestEntry& entry, const SampleOptions& options);

// Image: bilinear resize to S x S then normalization. Mask: binarized at
// native resolution, then nearest-neighbor resized. Throws IoError (with the
// sample id) for unreadable files and ConsistencyError when image and label
// sizes differ.
LabeledSample load_sample(const ManifestEntry& entry, const SampleOptions& options);

torch::Tensor mask_to_tensor(const BinaryMask& mask);  // float32, 1 x H x W
torch::Tensor image_to_tensor(const RgbImage& image);  // float32, 3 x H x W in [0,1]

struct Batch {
  std::vector<std::string> sample_ids;
  torch::Tensor images;  // B x 3 x S x S
  torch::Tensor masks;   // B x 1 x S x S, values 0/1

  std::size_t size() const { return sample_ids.size(); }
};

enum class Order {
  fixed,     // manifest order every epoch
  shuffled,  // reshuffled each epoch from shuffle_seed + epoch
};

struct StreamOptions {
  bool cache = true;  // keep loaded samples in memory across epochs
  int workers = 1;    // parallel sample loading inside a batch
};

// Deterministic batch producer over a fixed list of samples. Batch order
// and contents do not depend on the worker count. Copies share the cache.
class BatchStream {
 public:
  using Loader = std::function<LabeledSample(std::size_t)>;

  BatchStream(std::vector<ManifestEntry> entries, SampleOptions options, int batch_size,
              Order order, std::uint64_t shuffle_seed = 0, StreamOptions stream_options = {});

  static BatchStream from_samples(std::vector<LabeledSample> samples, int batch_size, Order order,
                                  std::uint64_t shuffle_seed = 0);

  std::size_t sample_count() const { return count_; }
  std::size_t batches_per_epoch() const;
  int batch_size() const { return batch_size_; }
  // Spatial size of the produced samples; 0 for an empty stream.
  int image_size() const { return image_size_; }
  Order order() const { return order_; }

  std::vector<std::size_t> epoch_order(std::size_t epoch) const;
  std::vector<std::string> epoch_ids(std::size_t epoch) const;
  const std::string& sample_id(std::size_t index) const { return ids_.at(index); }

  void for_each_batch(std::size_t epoch, const std::function<void(const Batch&)>& visit) const;
  LabeledSample sample(std::size_t index) const;

 private:
  BatchStream() = default;
  Batch assemble(std::span<const std::size_t> indices) const;

  std::size_t count_ = 0;
  std::vector<std::string> ids_;
  Loader loader_;
  int batch_size_ = 1;
  int image_size_ = 0;
  Order order_ = Order::fixed;
  std::uint64_t shuffle_seed_ = 0;
  int workers_ = 1;
  bool cache_enabled_ = true;
  std::shared_ptr<std::vector<std::optional<LabeledSample>>> cache_;
};

// Stream over one split part: train is shuffled, val and test keep a fixed order.
BatchStream make_part_stream(const DatasetManifest& manifest, const SplitAssignment& assignment,
                             Part part, const SampleOptions& options, int batch_size,
                             std::uint64_t shuffle_seed, StreamOptions stream_options = {});

}  // namespace roadseg::data
