#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace roadseg::models {

enum class Architecture { vgg16_decoder, unet };

Architecture parse_architecture(std::string_view name);
std::string to_string(Architecture arch);

struct ModelConfig {
  Architecture architecture = Architecture::unet;
  int input_size = 512;
  bool pretrained_encoder = false;     // vgg16_decoder only
  std::string pretrained_weights;      // file with ImageNet VGG-16 feature weights
  bool freeze_encoder = false;         // vgg16_decoder only
  int base_channels = 64;              // unet only

  // Throws ConfigError on an invalid combination.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Common base of the two networks. forward maps B x 3 x S x S images to
// B x 1 x S x S raw logits.
class SegmentationNet : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
};

// VGG-16 convolutional stack (fully connected head removed) followed by
// three stride-2 transposed convolutions, a 1x1 projection to one channel
// and a bilinear upsample to 512 x 512.
class Vgg16Decoder : public SegmentationNet {
 public:
  Vgg16Decoder();
  torch::Tensor forward(const torch::Tensor& x) override;

  torch::nn::Sequential features{nullptr};
  torch::nn::Sequential decoder{nullptr};
};

class DoubleConv : public torch::nn::Module {
 public:
  DoubleConv(int in_channels, int out_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d first_{nullptr};
  torch::nn::Conv2d second_{nullptr};
};

// Four-level U-Net with padded 3x3 convolutions so the logit map keeps the
// input resolution.
class UNet : public SegmentationNet {
 public:
  explicit UNet(int base_channels);
  torch::Tensor forward(const torch::Tensor& x) override;

  // Contracting-path outputs at depths 0..4 (spatial size S / 2^d).
  std::vector<torch::Tensor> encoder_features(const torch::Tensor& x);

 private:
  std::shared_ptr<DoubleConv> inc_;
  std::vector<std::shared_ptr<DoubleConv>> down_;
  std::vector<torch::nn::ConvTranspose2d> up_sample_;
  std::vector<std::shared_ptr<DoubleConv>> up_conv_;
  torch::nn::Conv2d head_{nullptr};
};

class SegmentationModel {
 public:
  SegmentationModel(ModelConfig config, std::shared_ptr<SegmentationNet> net);

  const ModelConfig& config() const { return config_; }
  Architecture architecture() const { return config_.architecture; }
  SegmentationNet& net() { return *net_; }
  const SegmentationNet& net() const { return *net_; }
  std::shared_ptr<SegmentationNet> module() const { return net_; }

  // Throws ShapeError unless the batch is B x 3 x S x S with S = input_size.
  torch::Tensor forward(const torch::Tensor& batch);

  std::vector<torch::Tensor> parameters() const { return net_->parameters(); }
  std::vector<torch::Tensor> trainable_parameters() const;
  torch::OrderedDict<std::string, torch::Tensor> named_parameters() const {
    return net_->named_parameters();
  }
  std::int64_t parameter_count() const;

  void train(bool on = true) { net_->train(on); }
  void eval() { net_->eval(); }
  bool is_training() const { return net_->is_training(); }

  // Deep copy with identical parameter values.
  SegmentationModel clone() const;

 private:
  ModelConfig config_;
  std::shared_ptr<SegmentationNet> net_;
};

// Fresh layers use Kaiming-uniform weights and zero biases drawn from
// `seed`. With pretrained_encoder the VGG feature stack is read from
// config.pretrained_weights; a missing or unusable file raises
// WeightAcquisitionError.
SegmentationModel build_vgg16_decoder(const ModelConfig& config, std::uint64_t seed = 0);
SegmentationModel build_unet(const ModelConfig& config, std::uint64_t seed = 0);
SegmentationModel build_model(const ModelConfig& config, std::uint64_t seed = 0);

// Reads a tensor dictionary saved with torch.save({name: tensor}) in
// Python (or torch::pickle_save) whose keys are torchvision VGG-16
// feature names, with or without the "features." prefix.
void load_vgg16_features(Vgg16Decoder& net, const std::filesystem::path& path);
void save_vgg16_features(const Vgg16Decoder& net, const std::filesystem::path& path);

// Checkpoint container: magic, format version, JSON header (architecture,
// config echo, tensor table, payload checksum) and raw little-endian
// float32 payload. Errors raise CheckpointError.
void save_weights(const SegmentationModel& model, const std::filesystem::path& path);
SegmentationModel load_weights(const std::filesystem::path& path, const ModelConfig& config);

}  // namespace roadseg::models
