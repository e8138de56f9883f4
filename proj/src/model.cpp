// SPDX-License-Identifier: Apache-2.0
#include "freqnet/model.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "freqnet/error.hpp"

namespace freqnet {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidInput("model config: " + what); };
  if (feature_channels < 1) fail("feature_channels must be >= 1");
  if (blocks_per_group < 0 || sen_rg < 0 || sen_drg < 0 || frn_dwrg < 0 || frn_rg < 0)
    fail("group and block counts must be >= 0");
  if (!(w1 + w2 > 0.0)) fail("w1 + w2 must be positive");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) fail("leaky_slope must lie in (0, 1)");
  if (block_size < 1) fail("block_size must be positive");
  if (region < 1 || region > block_size) fail("region must lie in [1, block_size]");
  if (shrink_stages < 1 || shrink_stages > 30) fail("shrink_stages must be >= 1");
  const long long factor = 1LL << shrink_stages;
  if (factor > block_size || block_size % factor != 0)
    fail("2^shrink_stages must divide block_size " + std::to_string(block_size));
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"feature_channels", c.feature_channels},
                     {"blocks_per_group", c.blocks_per_group},
                     {"sen_rg", c.sen_rg},
                     {"sen_drg", c.sen_drg},
                     {"frn_dwrg", c.frn_dwrg},
                     {"frn_rg", c.frn_rg},
                     {"shrink_stages", c.shrink_stages},
                     {"w1", c.w1},
                     {"w2", c.w2},
                     {"leaky_slope", c.leaky_slope},
                     {"region", c.region},
                     {"block_size", c.block_size}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.feature_channels = j.value("feature_channels", d.feature_channels);
  c.blocks_per_group = j.value("blocks_per_group", d.blocks_per_group);
  c.sen_rg = j.value("sen_rg", d.sen_rg);
  c.sen_drg = j.value("sen_drg", d.sen_drg);
  c.frn_dwrg = j.value("frn_dwrg", d.frn_dwrg);
  c.frn_rg = j.value("frn_rg", d.frn_rg);
  c.shrink_stages = j.value("shrink_stages", d.shrink_stages);
  c.w1 = j.value("w1", d.w1);
  c.w2 = j.value("w2", d.w2);
  c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  c.region = j.value("region", d.region);
  c.block_size = j.value("block_size", d.block_size);
}

namespace {

Tensor apply(const Tensor& x, const ConvParams& c, int stride = 1) {
  return conv2d(x, c.w, c.b, stride, c.w.dim(2) / 2);
}

void check_preserved(const Tensor& in, const Tensor& out, const char* what) {
  if (in.shape() != out.shape())
    throw InternalError(std::string(what) + ": shape drift " + to_string(in.shape()) + " -> " +
                        to_string(out.shape()));
}

}  // namespace

Tensor residual_block(const Tensor& x, const BlockParams& p, double slope) {
  const Tensor res = apply(leaky_relu(apply(x, p.first), slope), p.second);
  check_preserved(x, res, "residual_block");
  return add(x, res);
}

Tensor deformable_residual_block(const Tensor& x, const BlockParams& p, double slope) {
  if (!p.offset) throw InvalidInput("deformable_residual_block: missing offset branch");
  const Tensor h = leaky_relu(apply(x, p.first), slope);
  const Tensor offsets = apply(h, *p.offset);
  const Tensor res = deformable_conv2d(h, p.second.w, p.second.b, offsets);
  check_preserved(x, res, "deformable_residual_block");
  return add(x, res);
}

Tensor depthwise_residual_block(const Tensor& x, const BlockParams& p, double slope) {
  const Tensor h = leaky_relu(depthwise_conv2d(x, p.first.w, p.first.b, 1, p.first.w.dim(2) / 2), slope);
  const Tensor res = apply(h, p.second);
  check_preserved(x, res, "depthwise_residual_block");
  return add(x, res);
}

Tensor residual_group(const Tensor& x, const GroupParams& g, double slope) {
  if (g.blocks.empty()) return x;
  Tensor h = x;
  for (const auto& b : g.blocks) {
    switch (g.kind) {
      case BlockKind::rb: h = residual_block(h, b, slope); break;
      case BlockKind::drb: h = deformable_residual_block(h, b, slope); break;
      case BlockKind::dwrb: h = depthwise_residual_block(h, b, slope); break;
    }
  }
  const Tensor res = apply(h, g.tail);
  check_preserved(x, res, "residual_group");
  return add(x, res);
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InvalidInput("missing parameter '" + name + "'");
  return it->second;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InvalidInput("missing parameter '" + name + "'");
  return it->second;
}

void ModelParams::zero_grad() {
  for (auto& [_, t] : tensors_) t.zero_grad();
}

ModelParams ModelParams::clone() const {
  NamedTensors copy;
  for (const auto& [name, t] : tensors_)
    copy.emplace(name, Tensor::from(t.shape(), {t.data().begin(), t.data().end()}, t.requires_grad()));
  return ModelParams(std::move(copy));
}

namespace {

enum class Init { kaiming, zero };

struct ParamSpec {
  std::string name;  // without ".w" / ".b"
  Shape shape;
  Init init;
  double gain;
};

std::string group_prefix(const std::string& trunk, int g) { return trunk + ".g" + std::to_string(g); }
std::string block_prefix(const std::string& group, int b) { return group + ".b" + std::to_string(b); }

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  cfg.validate();
  const int c = cfg.feature_channels;
  const int r2 = cfg.channels_out();
  const double act_gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
  std::vector<ParamSpec> specs;

  auto add_group = [&](const std::string& prefix, BlockKind kind, int ch) {
    if (cfg.blocks_per_group == 0) return;
    for (int b = 0; b < cfg.blocks_per_group; ++b) {
      const auto bp = block_prefix(prefix, b);
      if (kind == BlockKind::dwrb) {
        specs.push_back({bp + ".conv1", {ch, 1, 3, 3}, Init::kaiming, act_gain});
        specs.push_back({bp + ".conv2", {ch, ch, 1, 1}, Init::zero, 1.0});
      } else {
        specs.push_back({bp + ".conv1", {ch, ch, 3, 3}, Init::kaiming, act_gain});
        specs.push_back({bp + ".conv2", {ch, ch, 3, 3}, Init::zero, 1.0});
        if (kind == BlockKind::drb) specs.push_back({bp + ".offset", {18, ch, 3, 3}, Init::zero, 1.0});
      }
    }
    specs.push_back({prefix + ".tail", {ch, ch, 3, 3}, Init::zero, 1.0});
  };

  specs.push_back({"sen.shallow", {c, 1, 3, 3}, Init::kaiming, 1.0});
  for (int g = 0; g < cfg.sen_rg + cfg.sen_drg; ++g)
    add_group(group_prefix("sen.rt", g), g < cfg.sen_rg ? BlockKind::rb : BlockKind::drb, c);
  for (int s = 0; s < cfg.shrink_stages; ++s)
    specs.push_back({"sen.st.s" + std::to_string(s), {c, c, 4, 4}, Init::kaiming, act_gain});
  const int pk = cfg.block_size >> cfg.shrink_stages;
  specs.push_back({"sen.proj", {r2, c, pk, pk}, Init::kaiming, 1.0});

  for (int g = 0; g < cfg.frn_dwrg + cfg.frn_rg; ++g)
    add_group(group_prefix("frn.frt", g), g < cfg.frn_dwrg ? BlockKind::dwrb : BlockKind::rb, r2);
  specs.push_back({"frn.tail", {r2, r2, 3, 3}, Init::zero, 1.0});
  return specs;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  const auto specs = param_specs(cfg);
  if (cfg.blocks_per_group == 0)
    std::clog << "freqnet: blocks_per_group = 0, every residual group is the identity\n";
  std::mt19937_64 rng(seed);
  NamedTensors tensors;
  for (const auto& s : specs) {
    std::vector<double> w(numel(s.shape), 0.0);
    if (s.init == Init::kaiming) {
      const int fan_in = s.shape[1] * s.shape[2] * s.shape[3];
      std::normal_distribution<double> dist(0.0, s.gain / std::sqrt(static_cast<double>(fan_in)));
      for (auto& v : w) v = dist(rng);
    }
    tensors.emplace(s.name + ".w", Tensor::from(s.shape, std::move(w), true));
    tensors.emplace(s.name + ".b", Tensor::zeros({s.shape[0]}, true));
  }
  return ModelParams(std::move(tensors));
}

void ModelParams::check_against(const ModelConfig& cfg) const {
  const auto specs = param_specs(cfg);
  if (specs.size() * 2 != tensors_.size())
    throw InvalidInput("checkpoint holds " + std::to_string(tensors_.size()) +
                       " tensors, config requires " + std::to_string(specs.size() * 2));
  for (const auto& s : specs) {
    if (at(s.name + ".w").shape() != s.shape)
      throw InvalidInput("parameter '" + s.name + ".w' has shape " +
                         to_string(at(s.name + ".w").shape()) + ", expected " + to_string(s.shape));
    if (at(s.name + ".b").shape() != Shape{s.shape[0]})
      throw InvalidInput("parameter '" + s.name + ".b' has the wrong shape");
  }
}

GroupParams group_params(const ModelParams& params, const std::string& prefix, BlockKind kind,
                         int blocks) {
  GroupParams g;
  g.kind = kind;
  if (blocks == 0) return g;
  auto conv = [&](const std::string& name) { return ConvParams{params.at(name + ".w"), params.at(name + ".b")}; };
  for (int b = 0; b < blocks; ++b) {
    const auto bp = block_prefix(prefix, b);
    BlockParams p{conv(bp + ".conv1"), conv(bp + ".conv2"), std::nullopt};
    if (kind == BlockKind::drb) p.offset = conv(bp + ".offset");
    g.blocks.push_back(std::move(p));
  }
  g.tail = conv(prefix + ".tail");
  return g;
}

Shape sen_output_shape(const ModelConfig& cfg, int batch, int height, int width) {
  cfg.validate();
  if (height <= 0 || width <= 0 || height % cfg.block_size || width % cfg.block_size)
    throw InvalidInput("SEN input " + std::to_string(height) + "x" + std::to_string(width) +
                       " is not a multiple of " + std::to_string(cfg.block_size));
  return {batch, cfg.channels_out(), height / cfg.block_size, width / cfg.block_size};
}

Tensor sen_forward(const Tensor& lr_up, const ModelParams& params, const ModelConfig& cfg) {
  if (lr_up.rank() != 4 || lr_up.dim(1) != 1)
    throw InvalidInput("sen_forward: expected [N, 1, H, W], got " + to_string(lr_up.shape()));
  const Shape expected = sen_output_shape(cfg, lr_up.dim(0), lr_up.dim(2), lr_up.dim(3));
  auto conv = [&](const std::string& name) { return ConvParams{params.at(name + ".w"), params.at(name + ".b")}; };

  Tensor h = apply(lr_up, conv("sen.shallow"));
  for (int g = 0; g < cfg.sen_rg + cfg.sen_drg; ++g)
    h = residual_group(h,
                       group_params(params, group_prefix("sen.rt", g),
                                    g < cfg.sen_rg ? BlockKind::rb : BlockKind::drb,
                                    cfg.blocks_per_group),
                       cfg.leaky_slope);
  for (int s = 0; s < cfg.shrink_stages; ++s) {
    const auto c = conv("sen.st.s" + std::to_string(s));
    h = leaky_relu(conv2d(h, c.w, c.b, 2, 1), cfg.leaky_slope);
  }
  const auto proj = conv("sen.proj");
  const int pk = proj.w.dim(2);
  Tensor out = conv2d(h, proj.w, proj.b, pk, 0);
  if (out.shape() != expected)
    throw InternalError("sen_forward: produced " + to_string(out.shape()) + ", expected " +
                        to_string(expected));
  return out;
}

Tensor frn_forward(const Tensor& lr_maps, const ModelParams& params, const ModelConfig& cfg) {
  cfg.validate();
  if (lr_maps.rank() != 4 || lr_maps.dim(1) != cfg.channels_out())
    throw InvalidInput("frn_forward: expected [N, " + std::to_string(cfg.channels_out()) +
                       ", Hb, Wb], got " + to_string(lr_maps.shape()));
  Tensor h = lr_maps;
  for (int g = 0; g < cfg.frn_dwrg + cfg.frn_rg; ++g)
    h = residual_group(h,
                       group_params(params, group_prefix("frn.frt", g),
                                    g < cfg.frn_dwrg ? BlockKind::dwrb : BlockKind::rb,
                                    cfg.blocks_per_group),
                       cfg.leaky_slope);
  const Tensor res = apply(h, ConvParams{params.at("frn.tail.w"), params.at("frn.tail.b")});
  return add(res, lr_maps);
}

Tensor freqnet_forward(const Tensor& lr_up, const Tensor& lr_maps, const ModelParams& params,
                       const ModelConfig& cfg) {
  if (lr_up.rank() != 4 || lr_maps.rank() != 4 || lr_up.dim(0) != lr_maps.dim(0) ||
      lr_up.dim(2) != cfg.block_size * lr_maps.dim(2) ||
      lr_up.dim(3) != cfg.block_size * lr_maps.dim(3))
    throw InvalidInput("freqnet_forward: image " + to_string(lr_up.shape()) +
                       " does not match maps " + to_string(lr_maps.shape()));
  const Tensor a = sen_forward(lr_up, params, cfg);
  const Tensor b = frn_forward(lr_maps, params, cfg);
  if (a.shape() != b.shape())
    throw InternalError("freqnet_forward: branch shapes differ " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
  const Tensor parts[] = {a, b};
  const double weights[] = {cfg.w1, cfg.w2};
  return weighted_sum(parts, weights);
}

std::filesystem::path sidecar_path(const std::filesystem::path& weights) {
  auto p = weights;
  p += ".json";
  return p;
}

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                const nlohmann::json& extra) {
  save_tensors(path, params.tensors());
  nlohmann::json j = extra.is_object() ? extra : nlohmann::json::object();
  j["model"] = cfg;
  std::ofstream os(sidecar_path(path));
  if (!os) throw RuntimeFailure("cannot write " + sidecar_path(path).string());
  os << j.dump(2) << '\n';
}

std::pair<ModelConfig, ModelParams> load_model(const std::filesystem::path& path) {
  std::ifstream is(sidecar_path(path));
  if (!is) throw InvalidInput("missing model sidecar " + sidecar_path(path).string());
  ModelConfig cfg;
  try {
    cfg = nlohmann::json::parse(is).at("model").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed model sidecar: ") + e.what());
  }
  cfg.validate();
  NamedTensors tensors = load_tensors(path);
  for (auto& [_, t] : tensors) t = Tensor::from(t.shape(), {t.data().begin(), t.data().end()}, true);
  ModelParams params(std::move(tensors));
  params.check_against(cfg);
  return {cfg, std::move(params)};
}

}  // namespace freqnet
