// SPDX-License-Identifier: Apache-2.0
//
// FreqNet: two parallel branches predicting the same [N, R*R, H/M, W/M]
// feature maps, combined by a fixed weighted sum.
//
//   SEN  upscaled LR luma -> shallow conv -> RG* -> DRG* -> stride-2 convs -> projection
//   FRN  LR feature maps  -> DWRG* -> RG* -> tail conv, plus global skip
//
// Every residual unit ends in a zero-initialized conv, so a freshly
// initialized group is the identity and the FRN returns its input.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "freqnet/checkpoint.hpp"
#include "freqnet/tensor.hpp"

namespace freqnet {

struct ModelConfig {
  int feature_channels = 64;
  int blocks_per_group = 10;
  int sen_rg = 7;
  int sen_drg = 3;
  int frn_dwrg = 3;
  int frn_rg = 7;
  int shrink_stages = 5;
  double w1 = 0.5;
  double w2 = 0.5;
  double leaky_slope = 0.2;
  int region = 10;
  int block_size = 32;

  void validate() const;
  int channels_out() const { return region * region; }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class BlockKind { rb, drb, dwrb };

struct ConvParams {
  Tensor w;
  Tensor b;
};

struct BlockParams {
  ConvParams first;   // conv (RB, DRB) or depthwise conv (DWRB)
  ConvParams second;  // conv (RB), deformable conv (DRB) or 1x1 conv (DWRB)
  std::optional<ConvParams> offset;  // DRB only: produces the sampling offsets
};

struct GroupParams {
  BlockKind kind = BlockKind::rb;
  std::vector<BlockParams> blocks;
  ConvParams tail;
};

/// x + Conv2(LeakyReLU(Conv1(x)))
Tensor residual_block(const Tensor& x, const BlockParams& p, double slope);
/// x + DefConv(LeakyReLU(Conv(x))), offsets = OffsetConv(LeakyReLU(Conv(x)))
Tensor deformable_residual_block(const Tensor& x, const BlockParams& p, double slope);
/// x + Conv1x1(LeakyReLU(DWConv(x)))
Tensor depthwise_residual_block(const Tensor& x, const BlockParams& p, double slope);
/// x + Tail(block_n(... block_1(x))); identity when the group has no blocks.
Tensor residual_group(const Tensor& x, const GroupParams& g, double slope);

/// Named learnable tensors, ordered by name.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(NamedTensors tensors) : tensors_(std::move(tensors)) {}

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  void set(const std::string& name, Tensor t) { tensors_[name] = std::move(t); }
  const NamedTensors& tensors() const { return tensors_; }
  NamedTensors& tensors() { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  void zero_grad();
  /// Deep copy with fresh leaf tensors.
  ModelParams clone() const;
  /// Throws InvalidInput unless names and shapes match what `cfg` requires.
  void check_against(const ModelConfig& cfg) const;

 private:
  NamedTensors tensors_;
};

/// Deterministic given the seed: Kaiming fan-in normal weights, zero biases,
/// zero residual tails and offset branches.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

GroupParams group_params(const ModelParams& params, const std::string& prefix, BlockKind kind,
                         int blocks);

/// [N, 1, H, W] -> [N, R*R, H/M, W/M]
Tensor sen_forward(const Tensor& lr_up, const ModelParams& params, const ModelConfig& cfg);
/// [N, R*R, Hb, Wb] -> same shape
Tensor frn_forward(const Tensor& lr_maps, const ModelParams& params, const ModelConfig& cfg);
Tensor freqnet_forward(const Tensor& lr_up, const Tensor& lr_maps, const ModelParams& params,
                       const ModelConfig& cfg);
/// Output shape of sen_forward without running it.
Shape sen_output_shape(const ModelConfig& cfg, int batch, int height, int width);

/// FQW1 tensors plus a JSON sidecar (<path>.json) holding the ModelConfig.
void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                const nlohmann::json& extra = {});
std::pair<ModelConfig, ModelParams> load_model(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& weights);

}  // namespace freqnet
