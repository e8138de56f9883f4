// SPDX-License-Identifier: Apache-2.0
#include "freqnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "freqnet/checkpoint.hpp"
#include "freqnet/error.hpp"

namespace freqnet {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidInput("train config: " + m); };
  if (hr_patch <= 0 || hr_patch % kBlockSize) fail("hr_patch must be a positive multiple of 32");
  if (scale <= 0 || hr_patch % scale) fail("scale must divide hr_patch");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (iterations < 0) fail("iterations must be non-negative");
  if (patches_per_image <= 0) fail("patches_per_image must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) || !(adam.eps > 0))
    fail("adam betas must lie in [0, 1) and eps must be positive");
  if (!(coslr.eta_max >= coslr.eta_min) || !(coslr.eta_min >= 0)) fail("need 0 <= eta_min <= eta_max");
  if (coslr.period <= 0) fail("cosine period must be positive");
  if (!(epsilon > 0)) fail("epsilon must be positive");
  if (log_interval <= 0) fail("log_interval must be positive");
  if (checkpoint_interval < 0) fail("checkpoint_interval must be non-negative");
  if (!(grad_clip >= 0)) fail("grad_clip must be non-negative");
}

WeightProfile TrainConfig::weights(int r) const {
  return weight_table.empty() ? table1_weights(r) : weights_from_table(r, weight_table);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"hr_patch", c.hr_patch},
       {"scale", c.scale},
       {"batch_size", c.batch_size},
       {"iterations", c.iterations},
       {"patches_per_image", c.patches_per_image},
       {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
       {"coslr", {{"eta_max", c.coslr.eta_max}, {"eta_min", c.coslr.eta_min}, {"period", c.coslr.period}}},
       {"seed", c.seed},
       {"epsilon", c.epsilon},
       {"weight_table", c.weight_table},
       {"log_interval", c.log_interval},
       {"checkpoint_interval", c.checkpoint_interval},
       {"grad_clip", c.grad_clip}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("hr_patch", c.hr_patch);
  get("scale", c.scale);
  get("batch_size", c.batch_size);
  get("iterations", c.iterations);
  get("patches_per_image", c.patches_per_image);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
  }
  if (j.contains("coslr")) {
    const auto& s = j.at("coslr");
    c.coslr.eta_max = s.value("eta_max", c.coslr.eta_max);
    c.coslr.eta_min = s.value("eta_min", c.coslr.eta_min);
    c.coslr.period = s.value("period", c.coslr.period);
  }
  get("seed", c.seed);
  get("epsilon", c.epsilon);
  get("weight_table", c.weight_table);
  get("log_interval", c.log_interval);
  get("checkpoint_interval", c.checkpoint_interval);
  get("grad_clip", c.grad_clip);
}

std::vector<PatchPair> make_patch_pairs(const std::vector<NamedImage>& hr_images, const TrainConfig& cfg,
                                        std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::vector<PatchPair> out;
  const int p = cfg.hr_patch;
  for (const auto& [name, img] : hr_images) {
    if (img.width < p || img.height < p) {
      std::clog << "freqnet: skipping " << name << " (" << img.width << "x" << img.height
                << ") smaller than the " << p << "px patch\n";
      continue;
    }
    std::uniform_int_distribution<int> gx(0, (img.width - p) / kBlockSize);
    std::uniform_int_distribution<int> gy(0, (img.height - p) / kBlockSize);
    for (int k = 0; k < cfg.patches_per_image; ++k) {
      PatchPair pair;
      pair.source = name;
      pair.hr_x = gx(rng) * kBlockSize;
      pair.hr_y = gy(rng) * kBlockSize;
      pair.lr_x = pair.hr_x / cfg.scale;
      pair.lr_y = pair.hr_y / cfg.scale;
      pair.hr = crop(img, pair.hr_x, pair.hr_y, p, p);
      pair.lr = quantize8(bicubic_resize(pair.hr, 1, cfg.scale));
      out.push_back(std::move(pair));
    }
  }
  return out;
}

StatsPair shared_stats(const ChannelStats& s) { return {s, s}; }

namespace {

void check_stats(const StatsPair& stats) {
  if (stats.input.r <= 0 || stats.input.r != stats.target.r)
    throw InvalidInput("input and target stats must share one positive R");
}

Plane upscaled_luma(const Image& lr, int scale) { return bicubic_resize(luma_plane(lr), scale, 1); }

Tensor scaled_luma_tensor(const Plane& y) {
  std::vector<double> d(y.data.size());
  std::transform(y.data.begin(), y.data.end(), d.begin(), [](double v) { return v * kSenInputScale; });
  return Tensor::from({1, 1, y.height, y.width}, std::move(d));
}

Tensor maps_tensor(std::span<const FreqMaps* const> maps) {
  const FreqMaps& f = *maps.front();
  std::vector<double> d;
  d.reserve(f.data.size() * maps.size());
  for (const auto* m : maps) d.insert(d.end(), m->data.begin(), m->data.end());
  return Tensor::from({static_cast<int>(maps.size()), f.channels(), f.hb, f.wb}, std::move(d));
}

struct Batch {
  Tensor lr_up;
  Tensor m_lr;
  Tensor m_hr;
};

Batch make_batch(const std::vector<Sample>& samples, std::span<const std::size_t> idx) {
  const Sample& first = samples[idx.front()];
  std::vector<double> up;
  std::vector<const FreqMaps*> lr, hr;
  for (std::size_t i : idx) {
    const auto d = samples[i].lr_up.data();
    up.insert(up.end(), d.begin(), d.end());
    lr.push_back(&samples[i].m_lr);
    hr.push_back(&samples[i].m_hr);
  }
  return {Tensor::from({static_cast<int>(idx.size()), 1, first.lr_up.dim(2), first.lr_up.dim(3)}, std::move(up)),
          maps_tensor(lr), maps_tensor(hr)};
}

}  // namespace

Sample prepare_sample(const PatchPair& pair, const StatsPair& stats, int scale) {
  check_stats(stats);
  const Plane up = upscaled_luma(pair.lr, scale);
  const Plane hr = luma_plane(pair.hr);
  if (!up.same_size(hr)) throw InvalidInput("prepare_sample: upscaled LR does not match the HR patch");
  const RegionSpec region{stats.input.r};
  return {scaled_luma_tensor(up), normalize(plane_to_maps(up, region), stats.input),
          normalize(plane_to_maps(hr, region), stats.target)};
}

std::vector<FreqMaps> lr_up_maps(const std::vector<PatchPair>& pairs, int r, int scale) {
  std::vector<FreqMaps> out;
  for (const auto& p : pairs) out.push_back(plane_to_maps(upscaled_luma(p.lr, scale), {r}));
  return out;
}

std::vector<FreqMaps> hr_maps(const std::vector<PatchPair>& pairs, int r) {
  std::vector<FreqMaps> out;
  for (const auto& p : pairs) out.push_back(plane_to_maps(luma_plane(p.hr), {r}));
  return out;
}

double cos_lr(int t, int period, double eta_max, double eta_min) {
  if (period <= 0 || t < 0 || t > period)
    throw InvalidInput("cos_lr: need 0 <= t <= period, got t=" + std::to_string(t) +
                       " period=" + std::to_string(period));
  if (t == 0) return eta_max;
  if (t == period) return eta_min;
  return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(std::numbers::pi * t / period));
}

void adam_step(ModelParams& params, OptimizerState& state, double lr, const AdamConfig& cfg) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidInput("adam_step: learning rate must be >= 0");
  for (const auto& [name, t] : params.tensors())
    for (double g : t.grad())
      if (!std::isfinite(g))
        throw RuntimeFailure("non-finite gradient in '" + name + "' at step " + std::to_string(state.step + 1));
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, t] : params.tensors()) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(t.numel(), 0.0);
    if (v.empty()) v.assign(t.numel(), 0.0);
    if (m.size() != t.numel() || v.size() != t.numel())
      throw InvalidInput("adam_step: optimizer moments for '" + name + "' do not match the parameter");
    const auto g = t.grad();
    auto p = t.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
}

void save_optimizer(const std::filesystem::path& path, const OptimizerState& state) {
  NamedTensors t;
  for (const auto& [name, m] : state.m) t.emplace("m/" + name, Tensor::from({static_cast<int>(m.size())}, m));
  for (const auto& [name, v] : state.v) t.emplace("v/" + name, Tensor::from({static_cast<int>(v.size())}, v));
  t.emplace("step", Tensor::from({1}, {static_cast<double>(state.step)}));
  save_tensors(path, t);
}

OptimizerState load_optimizer(const std::filesystem::path& path) {
  OptimizerState s;
  for (const auto& [name, t] : load_tensors(path)) {
    std::vector<double> d(t.data().begin(), t.data().end());
    if (name == "step")
      s.step = static_cast<long long>(d.at(0));
    else if (name.starts_with("m/"))
      s.m[name.substr(2)] = std::move(d);
    else if (name.starts_with("v/"))
      s.v[name.substr(2)] = std::move(d);
    else
      throw InvalidInput("unexpected tensor '" + name + "' in optimizer state");
  }
  return s;
}

std::string to_ndjson(const LogRecord& r) {
  return nlohmann::json{{"iter", r.iter}, {"lr", r.lr}, {"l_freq", r.l_freq}, {"frm", r.frm}}.dump();
}

double dataset_loss(const ModelParams& params, const ModelConfig& mcfg, const std::vector<Sample>& samples,
                    const WeightProfile& w, CharbonnierParams p, int batch_size) {
  if (samples.empty()) throw InvalidInput("dataset_loss: no samples");
  NoGradGuard guard;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch b = make_batch(samples, idx);
    const Tensor out = freqnet_forward(b.lr_up, b.m_lr, params, mcfg);
    total += freq_loss(out, b.m_hr, w, p).item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(samples.size());
}

namespace {

void clip_gradients(ModelParams& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, t] : params.tensors())
    for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double s = max_norm / norm;
  for (auto& [_, t] : params.tensors())
    if (!t.grad().empty())
      for (double& g : t.node()->grad_buffer()) g *= s;
}

void write_checkpoint(const std::filesystem::path& dir, const std::string& stem, const TrainConfig& cfg,
                      const ModelConfig& mcfg, const ModelParams& params, const OptimizerState& opt, int iter) {
  // Write under temporary names first so an interrupted save never clobbers
  // the previous checkpoint.
  const auto weights = dir / (stem + ".fqw");
  const auto optim = dir / (stem + ".opt.fqw");
  const auto tmp_w = dir / (stem + ".tmp.fqw");
  const auto tmp_o = dir / (stem + ".tmp.opt.fqw");
  save_model(tmp_w, mcfg, params, {{"train", cfg}, {"iter", iter}, {"optimizer_step", opt.step}});
  save_optimizer(tmp_o, opt);
  std::filesystem::rename(tmp_w, weights);
  std::filesystem::rename(sidecar_path(tmp_w), sidecar_path(weights));
  std::filesystem::rename(tmp_o, optim);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const ModelConfig& mcfg, ModelParams params,
                  const std::vector<PatchPair>& dataset, const StatsPair& stats, const TrainOptions& opts) {
  cfg.validate();
  mcfg.validate();
  params.check_against(mcfg);
  check_stats(stats);
  if (dataset.empty()) throw InvalidInput("train: empty dataset");
  if (stats.input.r != mcfg.region)
    throw InvalidInput("train: stats R=" + std::to_string(stats.input.r) + " but model R=" +
                       std::to_string(mcfg.region));
  const WeightProfile w = cfg.weights(mcfg.region);
  const CharbonnierParams p = cfg.charbonnier();

  std::vector<Sample> samples;
  samples.reserve(dataset.size());
  for (const auto& pair : dataset) samples.push_back(prepare_sample(pair, stats, cfg.scale));

  std::ofstream log_file;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    log_file.open(opts.out_dir / "metrics.ndjson");
    if (!log_file) throw RuntimeFailure("cannot write " + (opts.out_dir / "metrics.ndjson").string());
  }

  TrainResult res;
  res.initial_loss = dataset_loss(params, mcfg, samples, w, p, cfg.batch_size);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  const int ckpt_every = cfg.checkpoint_interval > 0 ? cfg.checkpoint_interval : cfg.coslr.period;
  std::vector<std::size_t> idx;

  for (int it = 1; it <= cfg.iterations; ++it) {
    idx.clear();
    while (static_cast<int>(idx.size()) < std::min<int>(cfg.batch_size, static_cast<int>(samples.size()))) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const double lr = cos_lr((it - 1) % cfg.coslr.period, cfg.coslr.period, cfg.coslr.eta_max, cfg.coslr.eta_min);
    const Batch b = make_batch(samples, idx);
    params.zero_grad();
    const Tensor loss = freq_loss(freqnet_forward(b.lr_up, b.m_lr, params, mcfg), b.m_hr, w, p);
    const double l = loss.item();
    if (!std::isfinite(l)) throw RuntimeFailure("training diverged: non-finite loss at iteration " + std::to_string(it));
    loss.backward();
    if (cfg.grad_clip > 0) clip_gradients(params, cfg.grad_clip);
    adam_step(params, res.optimizer, lr, cfg.adam);

    if (it % cfg.log_interval == 0 || it == cfg.iterations) {
      const LogRecord rec{it, lr, l, frm(l)};
      res.log.push_back(rec);
      if (log_file) log_file << to_ndjson(rec) << '\n' << std::flush;
      if (opts.on_log) opts.on_log(rec);
    }
    if (!opts.out_dir.empty() && it % ckpt_every == 0)
      write_checkpoint(opts.out_dir, "checkpoint", cfg, mcfg, params, res.optimizer, it);
  }
  res.final_loss = dataset_loss(params, mcfg, samples, w, p, cfg.batch_size);
  if (!opts.out_dir.empty())
    write_checkpoint(opts.out_dir, "model", cfg, mcfg, params, res.optimizer, cfg.iterations);
  res.params = std::move(params);
  return res;
}

namespace {

Image clamp255(const Image& img) {
  Image out = img;
  for (auto& pl : out.planes)
    for (auto& v : pl.data) v = std::clamp(v, 0.0, 255.0);
  return out;
}

}  // namespace

SrOutput super_resolve(const Image& lr, const ModelParams& params, const ModelConfig& mcfg,
                       const StatsPair& stats, int scale) {
  check_stats(stats);
  if (stats.input.r != mcfg.region) throw InvalidInput("super_resolve: stats R does not match the model");
  const int m = mcfg.block_size;
  if (lr.width <= 0 || lr.height <= 0 || (lr.width * scale) % m || (lr.height * scale) % m)
    throw InvalidInput("super_resolve: LR " + std::to_string(lr.width) + "x" + std::to_string(lr.height) +
                       " upscaled by " + std::to_string(scale) + " is not a multiple of " + std::to_string(m));
  const Image up = bicubic_resize(lr, scale, 1);
  const bool rgb = up.channels() == 3;
  YccImage ycc;
  if (rgb) ycc = rgb_to_ycc(up);
  const Plane y = rgb ? ycc.y : luma_plane(up);

  SrOutput out;
  out.fill = plane_to_blocks(y, m);
  const FreqMaps m_lr = normalize(reform_to_maps(out.fill, {mcfg.region}), stats.input);
  FreqMaps pred(mcfg.region, m, m_lr.hb, m_lr.wb);
  {
    NoGradGuard guard;
    const FreqMaps* one[] = {&m_lr};
    const Tensor t = freqnet_forward(scaled_luma_tensor(y), maps_tensor(one), params, mcfg);
    pred.data.assign(t.data().begin(), t.data().end());
  }
  pred.normalized = true;
  const Plane y_sr = blocks_to_plane(maps_to_blocks(denormalize(pred, stats.target), out.fill));
  out.maps = std::move(pred);
  out.bicubic = clamp255(up);
  if (rgb) {
    ycc.y = y_sr;
    out.sr = ycc_to_rgb(ycc);
  } else {
    out.sr = Image(y_sr.width, y_sr.height, 1);
    for (std::size_t i = 0; i < y_sr.data.size(); ++i)
      out.sr.planes[0].data[i] = std::clamp(y_sr.data[i] + 128.0, 0.0, 255.0);
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  auto rec = [&](const ImageMetrics& m) {
    nlohmann::json j = {{"image", m.name}, {"psnr_y_db", m.psnr_y_db}, {"frm", m.frm}, {"l_freq", m.l_freq},
                        {"epsilon", epsilon}, {"weight_profile_id", weight_profile_id}, {"r", r},
                        {"stats_id", stats_id}};
    // JSON has no infinity; identical images report null.
    if (std::isinf(m.psnr_y_db)) j["psnr_y_db"] = nullptr;
    return j;
  };
  nlohmann::json images = nlohmann::json::array();
  for (const auto& m : this->images) images.push_back(rec(m));
  return {{"images", images}, {"aggregate", rec(aggregate)}};
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& mcfg, const StatsPair& stats,
                    const std::vector<NamedImage>& hr_images, const WeightProfile& w, CharbonnierParams p,
                    int scale) {
  check_stats(stats);
  p.validate();
  if (w.r != mcfg.region) throw InvalidInput("evaluate: weight profile R does not match the model");
  if (hr_images.empty()) throw InvalidInput("evaluate: no images");
  EvalReport rep;
  rep.epsilon = p.epsilon;
  rep.weight_profile_id = w.id;
  rep.r = mcfg.region;
  rep.stats_id = stats_id(stats.input);
  if (stats_id(stats.target) != rep.stats_id) rep.stats_id += "+" + stats_id(stats.target);
  rep.aggregate.name = "aggregate";
  for (const auto& [name, img] : hr_images) {
    const Image hr = center_crop_to_multiple(img, mcfg.block_size);
    if (hr.width == 0 || hr.height == 0) throw InvalidInput("evaluate: " + name + " is smaller than one block");
    const Image lr = quantize8(bicubic_resize(hr, 1, scale));
    const SrOutput sr = super_resolve(lr, params, mcfg, stats, scale);
    const FreqMaps m_hr = normalize(plane_to_maps(luma_plane(hr), {mcfg.region}, mcfg.block_size), stats.target);
    ImageMetrics im{name, psnr_y(sr.sr, hr), 0.0, freq_loss(sr.maps, m_hr, w, p)};
    im.frm = frm(im.l_freq);
    rep.aggregate.psnr_y_db += im.psnr_y_db;
    rep.aggregate.frm += im.frm;
    rep.aggregate.l_freq += im.l_freq;
    rep.images.push_back(std::move(im));
  }
  const double n = static_cast<double>(rep.images.size());
  rep.aggregate.psnr_y_db /= n;
  rep.aggregate.frm /= n;
  rep.aggregate.l_freq /= n;
  return rep;
}

std::vector<NamedImage> synthetic_images(int count, int size, std::uint64_t seed) {
  if (count < 0 || size <= 0) throw InvalidInput("synthetic_images: bad count or size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<NamedImage> out;
  for (int n = 0; n < count; ++n) {
    struct Wave {
      double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;
    const int k = 3 + static_cast<int>(unit(rng) * 3);
    for (int i = 0; i < k; ++i) {
      const double f = 0.01 + 0.1 * unit(rng);  // cycles per pixel, below the 4x LR Nyquist of 0.125
      const double angle = std::numbers::pi * unit(rng);
      waves.push_back({f * std::cos(angle), f * std::sin(angle), 2 * std::numbers::pi * unit(rng),
                       10.0 + 30.0 * unit(rng)});
    }
    const double ex = unit(rng) * size, ey = unit(rng) * size, ea = std::numbers::pi * unit(rng);
    const double step = 40.0 * (unit(rng) - 0.5);
    Image img(size, size, 1);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double v = 128.0;
        for (const auto& w : waves) v += w.amp * std::sin(2 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
        const double side = (x - ex) * std::cos(ea) + (y - ey) * std::sin(ea);
        v += step * std::tanh(side / 1.5);
        img.planes[0].at(x, y) = v;
      }
    char name[32];
    std::snprintf(name, sizeof name, "synthetic_%03d", n);
    out.push_back({name, quantize8(img)});
  }
  return out;
}

}  // namespace freqnet
