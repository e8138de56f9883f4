// SPDX-License-Identifier: Apache-2.0
//
// Patch extraction, sample preparation, Adam + cosine schedule, the training
// loop and full-pipeline evaluation.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "freqnet/dct_codec.hpp"
#include "freqnet/image.hpp"
#include "freqnet/loss_metrics.hpp"
#include "freqnet/model.hpp"
#include "freqnet/tensor.hpp"

namespace freqnet {

/// Luma enters the SEN level-shifted and divided by this.
inline constexpr double kSenInputScale = 1.0 / 128.0;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

struct CosLrConfig {
  double eta_max = 1e-4;
  double eta_min = 1e-7;
  int period = 100;  // iterations per restart period
};

struct TrainConfig {
  int hr_patch = 64;
  int scale = 4;
  int batch_size = 8;
  int iterations = 1000;
  int patches_per_image = 1;
  AdamConfig adam;
  CosLrConfig coslr;
  std::uint64_t seed = 0;
  double epsilon = 1e-3;
  /// Empty: the reference table (R = 10 only).
  std::vector<double> weight_table;
  int log_interval = 10;
  /// 0 selects the cosine period.
  int checkpoint_interval = 0;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;

  void validate() const;
  WeightProfile weights(int r) const;
  CharbonnierParams charbonnier() const { return {epsilon}; }
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct PatchPair {
  Image lr;
  Image hr;
  std::string source;
  int hr_x = 0;
  int hr_y = 0;
  int lr_x = 0;
  int lr_y = 0;
};

struct NamedImage {
  std::string name;
  Image image;
};

/// HR crops at uniform 32-aligned offsets, LR = 8-bit bicubic downscale of
/// each crop. Images smaller than the patch are skipped with a warning.
std::vector<PatchPair> make_patch_pairs(const std::vector<NamedImage>& hr_images, const TrainConfig& cfg,
                                        std::uint64_t seed);

/// Statistics for input (LR-up) maps and target (HR) maps. Shared mode uses
/// one set for both.
struct StatsPair {
  ChannelStats input;
  ChannelStats target;
};
StatsPair shared_stats(const ChannelStats& s);

struct Sample {
  Tensor lr_up;   // [1, 1, H, W], scaled luma
  FreqMaps m_lr;  // normalized
  FreqMaps m_hr;  // normalized
};

Sample prepare_sample(const PatchPair& pair, const StatsPair& stats, int scale = 4);

/// Unnormalized LR-up maps of every pair, for computing training statistics.
std::vector<FreqMaps> lr_up_maps(const std::vector<PatchPair>& pairs, int r, int scale = 4);
std::vector<FreqMaps> hr_maps(const std::vector<PatchPair>& pairs, int r);

double cos_lr(int t, int period, double eta_max, double eta_min);

struct OptimizerState {
  long long step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// One bias-corrected Adam update from the gradients stored on `params`.
/// Throws RuntimeFailure on a non-finite gradient, before touching anything.
void adam_step(ModelParams& params, OptimizerState& state, double lr, const AdamConfig& cfg);

void save_optimizer(const std::filesystem::path& path, const OptimizerState& state);
OptimizerState load_optimizer(const std::filesystem::path& path);

struct LogRecord {
  int iter = 0;
  double lr = 0.0;
  double l_freq = 0.0;
  double frm = 0.0;
};
std::string to_ndjson(const LogRecord& r);

struct TrainResult {
  ModelParams params;
  OptimizerState optimizer;
  std::vector<LogRecord> log;
  /// Training loss of the initial parameters over the whole dataset.
  double initial_loss = 0.0;
  /// Same, after the final step.
  double final_loss = 0.0;
};

struct TrainOptions {
  /// Directory for checkpoints and the metrics log; none when empty.
  std::filesystem::path out_dir;
  std::function<void(const LogRecord&)> on_log;
};

/// Deterministic given cfg.seed. Aborts with RuntimeFailure on a non-finite
/// loss; checkpoints already written are left in place.
TrainResult train(const TrainConfig& cfg, const ModelConfig& mcfg, ModelParams params,
                  const std::vector<PatchPair>& dataset, const StatsPair& stats,
                  const TrainOptions& opts = {});

/// Mean loss of `params` over the dataset, in batches of cfg.batch_size.
double dataset_loss(const ModelParams& params, const ModelConfig& mcfg, const std::vector<Sample>& samples,
                    const WeightProfile& w, CharbonnierParams p, int batch_size);

struct SrOutput {
  Image sr;
  Image bicubic;   // clamped bicubic upscale
  FreqMaps maps;   // model output, normalized with the target stats
  BlockGrid fill;  // LR-up blocks
};

/// LR image -> bicubic up -> maps -> model -> denormalize -> stage-1 fill -> iDCT.
/// Chroma comes from the bicubic upscale. LR dims times the scale must be
/// multiples of the block size.
SrOutput super_resolve(const Image& lr, const ModelParams& params, const ModelConfig& mcfg,
                       const StatsPair& stats, int scale = 4);

struct ImageMetrics {
  std::string name;
  double psnr_y_db = 0.0;
  double frm = 0.0;
  double l_freq = 0.0;
};

struct EvalReport {
  std::vector<ImageMetrics> images;
  ImageMetrics aggregate;
  double epsilon = 0.0;
  std::string weight_profile_id;
  int r = 0;
  std::string stats_id;
  nlohmann::json to_json() const;
};

/// HR images are center-cropped to block multiples, degraded by bicubic 1/scale
/// and 8-bit quantization, then super-resolved.
EvalReport evaluate(const ModelParams& params, const ModelConfig& mcfg, const StatsPair& stats,
                    const std::vector<NamedImage>& hr_images, const WeightProfile& w, CharbonnierParams p,
                    int scale = 4);

/// Smooth random textures (sums of oriented sinusoids plus a few edges),
/// grayscale, 8-bit.
std::vector<NamedImage> synthetic_images(int count, int size, std::uint64_t seed);

}  // namespace freqnet
