#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "roadseg/errors.hpp"
#include "roadseg/models.hpp"

namespace roadseg::models {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in host order and must be little-endian");

constexpr char kMagic[8] = {'R', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void save_weights(const SegmentationModel& model, const fs::path& path) {
  std::string payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& item : model.named_parameters()) {
    const torch::Tensor t = item.value().detach().to(torch::kFloat32).contiguous();
    const auto bytes = static_cast<std::size_t>(t.numel()) * sizeof(float);
    tensors.push_back({{"name", item.key()},
                       {"shape", t.sizes().vec()},
                       {"dtype", "float32"},
                       {"offset", payload.size()},
                       {"bytes", bytes}});
    payload.append(static_cast<const char*>(t.data_ptr()), bytes);
  }
  nlohmann::json header = {{"architecture", to_string(model.architecture())},
                           {"config", model.config().to_json()},
                           {"tensors", tensors},
                           {"payload_bytes", payload.size()},
                           {"payload_fnv1a64", fnv1a(payload.data(), payload.size())}};
  const std::string header_text = header.dump();

  std::string blob(kMagic, sizeof kMagic);
  put<std::uint32_t>(blob, kFormatVersion);
  put<std::uint64_t>(blob, header_text.size());
  blob += header_text;
  blob += payload;

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

SegmentationModel load_weights(const fs::path& path, const ModelConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < sizeof kMagic || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + " is not a roadseg checkpoint");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(blob, pos);
  if (version != kFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(blob, pos);
  if (header_len > blob.size() - pos) throw CheckpointError("checkpoint header truncated");

  nlohmann::json header;
  ModelConfig stored;
  try {
    header = nlohmann::json::parse(blob.substr(pos, header_len));
    stored = ModelConfig::from_json(header.at("config"));
  } catch (const std::exception& e) {
    throw CheckpointError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  pos += header_len;

  const std::string arch = header.value("architecture", "");
  if (arch != to_string(config.architecture)) {
    throw CheckpointError("checkpoint " + path.string() + " holds a " + arch + " model, expected " +
                          to_string(config.architecture));
  }
  if (config.architecture == Architecture::unet && config.base_channels != stored.base_channels) {
    throw CheckpointError("checkpoint base_channels " + std::to_string(stored.base_channels) +
                          " does not match configured " + std::to_string(config.base_channels));
  }

  const std::size_t payload_bytes = header.value("payload_bytes", std::size_t{0});
  if (blob.size() - pos != payload_bytes) throw CheckpointError("checkpoint payload truncated");
  const char* payload = blob.data() + pos;
  if (fnv1a(payload, payload_bytes) != header.value("payload_fnv1a64", std::uint64_t{0})) {
    throw CheckpointError("checkpoint payload checksum mismatch in " + path.string());
  }

  ModelConfig build_config = stored;
  build_config.pretrained_encoder = false;
  build_config.freeze_encoder = config.freeze_encoder;
  if (config.architecture == Architecture::unet) build_config.input_size = config.input_size;
  SegmentationModel model = build_model(build_config, 0);

  torch::NoGradGuard no_grad;
  auto params = model.named_parameters();
  std::size_t restored = 0;
  try {
    for (const auto& t : header.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      auto* target = params.find(name);
      if (target == nullptr) throw CheckpointError("unexpected tensor " + name);
      const auto shape = t.at("shape").get<std::vector<int64_t>>();
      if (c10::IntArrayRef(shape) != target->sizes()) throw CheckpointError("shape mismatch for " + name);
      const auto offset = t.at("offset").get<std::size_t>();
      const auto bytes = t.at("bytes").get<std::size_t>();
      if (bytes != static_cast<std::size_t>(target->numel()) * sizeof(float) ||
          offset + bytes > payload_bytes) {
        throw CheckpointError("tensor table inconsistent for " + name);
      }
      std::memcpy(target->data_ptr<float>(), payload + offset, bytes);
      ++restored;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt tensor table: ") + e.what());
  }
  if (restored != params.size()) throw CheckpointError("checkpoint is missing parameters");

  ModelConfig echo = stored;
  echo.freeze_encoder = config.freeze_encoder;
  echo.input_size = build_config.input_size;
  return SegmentationModel(echo, model.module());
}

}  // namespace roadseg::models
