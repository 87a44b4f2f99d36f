#include "roadseg/models.hpp"

#include <fstream>
#include <iterator>

#include "roadseg/errors.hpp"

namespace roadseg::models {

namespace nn = torch::nn;
namespace fs = std::filesystem;

namespace {

constexpr int kVggOutputSize = 512;

// torchvision "D" configuration; 0 marks a max-pool.
constexpr int kVgg16Layout[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0,
                                512, 512, 512, 0, 512, 512, 512, 0};

nn::ConvTranspose2d upsample_stage(int in_channels, int out_channels) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in_channels, out_channels, 3)
                                 .stride(2)
                                 .padding(1)
                                 .output_padding(1));
}

void kaiming_init(nn::Module& root) {
  torch::NoGradGuard no_grad;
  for (auto& module : root.modules(/*include_self=*/true)) {
    if (auto* conv = module->as<nn::Conv2d>()) {
      nn::init::kaiming_uniform_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* deconv = module->as<nn::ConvTranspose2d>()) {
      nn::init::kaiming_uniform_(deconv->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (deconv->bias.defined()) deconv->bias.zero_();
    }
  }
}

}  // namespace

Architecture parse_architecture(std::string_view name) {
  if (name == "vgg16_decoder") return Architecture::vgg16_decoder;
  if (name == "unet") return Architecture::unet;
  throw ConfigError("unknown architecture '" + std::string(name) +
                    "' (expected vgg16_decoder or unet)");
}

std::string to_string(Architecture arch) {
  return arch == Architecture::vgg16_decoder ? "vgg16_decoder" : "unet";
}

void ModelConfig::validate() const {
  if (architecture == Architecture::vgg16_decoder) {
    if (input_size != kVggOutputSize) {
      throw ConfigError("vgg16_decoder requires input_size 512 (got " +
                        std::to_string(input_size) + ")");
    }
  } else {
    if (input_size <= 0 || input_size % 16 != 0) {
      throw ConfigError("unet input_size must be a positive multiple of 16 (got " +
                        std::to_string(input_size) + ")");
    }
    if (base_channels < 1) throw ConfigError("unet base_channels must be >= 1");
    if (pretrained_encoder) throw ConfigError("pretrained_encoder is only valid for vgg16_decoder");
    if (freeze_encoder) throw ConfigError("freeze_encoder is only valid for vgg16_decoder");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"architecture", to_string(architecture)},
          {"input_size", input_size},
          {"pretrained_encoder", pretrained_encoder},
          {"pretrained_weights", pretrained_weights},
          {"freeze_encoder", freeze_encoder},
          {"base_channels", base_channels}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  c.input_size = j.value("input_size", c.input_size);
  c.pretrained_encoder = j.value("pretrained_encoder", c.pretrained_encoder);
  c.pretrained_weights = j.value("pretrained_weights", c.pretrained_weights);
  c.freeze_encoder = j.value("freeze_encoder", c.freeze_encoder);
  c.base_channels = j.value("base_channels", c.base_channels);
  return c;
}

Vgg16Decoder::Vgg16Decoder() {
  features = nn::Sequential();
  int channels = 3;
  for (int width : kVgg16Layout) {
    if (width == 0) {
      features->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
    } else {
      features->push_back(nn::Conv2d(nn::Conv2dOptions(channels, width, 3).padding(1)));
      features->push_back(nn::ReLU(nn::ReLUOptions(true)));
      channels = width;
    }
  }
  register_module("features", features);

  decoder = nn::Sequential(upsample_stage(512, 256), nn::ReLU(nn::ReLUOptions(true)),
                           upsample_stage(256, 128), nn::ReLU(nn::ReLUOptions(true)),
                           upsample_stage(128, 64), nn::ReLU(nn::ReLUOptions(true)),
                           nn::Conv2d(nn::Conv2dOptions(64, 1, 1)));
  register_module("decoder", decoder);
}

torch::Tensor Vgg16Decoder::forward(const torch::Tensor& x) {
  namespace F = nn::functional;
  auto logits = decoder->forward(features->forward(x));
  return F::interpolate(logits, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{kVggOutputSize, kVggOutputSize})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
}

DoubleConv::DoubleConv(int in_channels, int out_channels)
    : first_(nn::Conv2dOptions(in_channels, out_channels, 3).padding(1)),
      second_(nn::Conv2dOptions(out_channels, out_channels, 3).padding(1)) {
  register_module("first", first_);
  register_module("second", second_);
}

torch::Tensor DoubleConv::forward(const torch::Tensor& x) {
  return torch::relu(second_->forward(torch::relu(first_->forward(x))));
}

UNet::UNet(int base_channels) {
  const int b = base_channels;
  inc_ = register_module("inc", std::make_shared<DoubleConv>(3, b));
  for (int d = 1; d <= 4; ++d) {
    const int in = b << (d - 1);
    down_.push_back(register_module("down" + std::to_string(d), std::make_shared<DoubleConv>(in, in * 2)));
  }
  for (int u = 1; u <= 4; ++u) {
    const int in = b << (5 - u);  // 16b, 8b, 4b, 2b
    up_sample_.push_back(register_module(
        "up" + std::to_string(u) + "_sample",
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, in / 2, 2).stride(2))));
    up_conv_.push_back(
        register_module("up" + std::to_string(u) + "_conv", std::make_shared<DoubleConv>(in, in / 2)));
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(b, 1, 1)));
}

std::vector<torch::Tensor> UNet::encoder_features(const torch::Tensor& x) {
  std::vector<torch::Tensor> skips{inc_->forward(x)};
  for (auto& down : down_) {
    skips.push_back(down->forward(torch::max_pool2d(skips.back(), 2, 2)));
  }
  return skips;
}

torch::Tensor UNet::forward(const torch::Tensor& x) {
  auto skips = encoder_features(x);
  auto y = skips.back();
  for (std::size_t u = 0; u < up_sample_.size(); ++u) {
    y = up_sample_[u]->forward(y);
    y = up_conv_[u]->forward(torch::cat({skips[skips.size() - 2 - u], y}, 1));
  }
  return head_->forward(y);
}

SegmentationModel::SegmentationModel(ModelConfig config, std::shared_ptr<SegmentationNet> net)
    : config_(std::move(config)), net_(std::move(net)) {}

torch::Tensor SegmentationModel::forward(const torch::Tensor& batch) {
  const int s = config_.input_size;
  if (batch.dim() != 4 || batch.size(1) != 3 || batch.size(2) != s || batch.size(3) != s) {
    std::ostringstream msg;
    msg << "model expects B x 3 x " << s << " x " << s << " input, got " << batch.sizes();
    throw ShapeError(msg.str());
  }
  return net_->forward(batch);
}

std::vector<torch::Tensor> SegmentationModel::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (auto& p : net_->parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

std::int64_t SegmentationModel::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : net_->parameters()) n += p.numel();
  return n;
}

SegmentationModel SegmentationModel::clone() const {
  ModelConfig fresh = config_;
  fresh.pretrained_encoder = false;
  SegmentationModel copy = build_model(fresh, 0);
  copy.config_ = config_;
  torch::NoGradGuard no_grad;
  auto dst = copy.net_->named_parameters();
  for (const auto& item : net_->named_parameters()) {
    dst[item.key()].copy_(item.value());
    dst[item.key()].set_requires_grad(item.value().requires_grad());
  }
  copy.net_->train(net_->is_training());
  return copy;
}

SegmentationModel build_vgg16_decoder(const ModelConfig& config, std::uint64_t seed) {
  if (config.architecture != Architecture::vgg16_decoder) {
    throw ConfigError("build_vgg16_decoder called with architecture " + to_string(config.architecture));
  }
  config.validate();
  torch::manual_seed(seed);
  auto net = std::make_shared<Vgg16Decoder>();
  kaiming_init(*net);
  if (config.pretrained_encoder) load_vgg16_features(*net, config.pretrained_weights);
  if (config.freeze_encoder) {
    for (auto& p : net->features->parameters()) p.set_requires_grad(false);
  }
  return SegmentationModel(config, net);
}

SegmentationModel build_unet(const ModelConfig& config, std::uint64_t seed) {
  if (config.architecture != Architecture::unet) {
    throw ConfigError("build_unet called with architecture " + to_string(config.architecture));
  }
  config.validate();
  torch::manual_seed(seed);
  auto net = std::make_shared<UNet>(config.base_channels);
  kaiming_init(*net);
  return SegmentationModel(config, net);
}

SegmentationModel build_model(const ModelConfig& config, std::uint64_t seed) {
  return config.architecture == Architecture::vgg16_decoder ? build_vgg16_decoder(config, seed)
                                                            : build_unet(config, seed);
}

void load_vgg16_features(Vgg16Decoder& net, const fs::path& path) {
  if (path.empty()) {
    throw WeightAcquisitionError(
        "pretrained_encoder is set but no pretrained_weights file was configured; export one with "
        "tools/export_vgg16_features.py");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightAcquisitionError("pretrained VGG-16 weights not found: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  c10::impl::GenericDict dict(c10::StringType::get(), c10::TensorType::get());
  try {
    const auto value = torch::pickle_load(bytes);
    if (!value.isGenericDict()) throw WeightAcquisitionError("not a tensor dictionary");
    dict = value.toGenericDict();
  } catch (const WeightAcquisitionError& e) {
    throw WeightAcquisitionError(path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw WeightAcquisitionError("cannot read pretrained weights " + path.string() + ": " + e.what());
  }

  torch::NoGradGuard no_grad;
  for (auto& item : net.features->named_parameters()) {
    const std::string& name = item.key();
    torch::Tensor source;
    const std::string keys[] = {"features." + name, name};
    for (const auto& key : keys) {
      auto it = dict.find(key);
      if (it != dict.end() && it->value().isTensor()) {
        source = it->value().toTensor();
        break;
      }
    }
    if (!source.defined()) {
      throw WeightAcquisitionError(path.string() + ": missing tensor features." + name);
    }
    if (source.sizes() != item.value().sizes()) {
      throw WeightAcquisitionError(path.string() + ": shape mismatch for features." + name);
    }
    item.value().copy_(source.to(torch::kFloat32));
  }
}

void save_vgg16_features(const Vgg16Decoder& net, const fs::path& path) {
  c10::impl::GenericDict dict(c10::StringType::get(), c10::TensorType::get());
  for (const auto& item : net.features->named_parameters()) {
    dict.insert("features." + item.key(), item.value().detach().clone());
  }
  const std::vector<char> bytes = torch::pickle_save(dict);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace roadseg::models
