// SPDX-License-Identifier: Apache-2.0
#include "freqnet/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "freqnet/dct_codec.hpp"
#include "freqnet/enhancer.hpp"
#include "freqnet/error.hpp"
#include "freqnet/loss_metrics.hpp"
#include "freqnet/model.hpp"
#include "freqnet/selfcheck.hpp"
#include "freqnet/trainer.hpp"

namespace freqnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitSelfcheck = 3;

struct SelfcheckFailed {};

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> r;
  std::optional<double> epsilon;
  std::optional<double> w1;
  std::optional<double> w2;
  std::string out;
};

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<NamedImage> load_dir(const fs::path& dir) {
  std::vector<NamedImage> out;
  for (const auto& p : list_pngs(dir)) out.push_back({p.filename().string(), read_png(p)});
  if (out.empty()) throw InvalidInput("no PNG images in " + dir.string());
  return out;
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw InvalidInput("cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw RuntimeFailure("cannot write " + p.string());
  os << text;
}

void require_out(const Overrides& o) {
  if (o.out.empty()) throw InvalidInput("--out is required");
}

json config_file(const Overrides& o) { return o.config.empty() ? json::object() : read_json(o.config); }

std::uint64_t effective_seed(const Overrides& o, const json& file) {
  if (o.seed) return *o.seed;
  return file.value("seed", std::uint64_t{0});
}

/// Stats: input file, plus an optional target file for dual mode.
StatsPair load_stats_pair(const std::string& input, const std::string& target) {
  if (input.empty()) throw InvalidInput("--stats is required");
  const ChannelStats in = load_stats(input);
  return target.empty() ? shared_stats(in) : StatsPair{in, load_stats(target)};
}

/// Loads a checkpoint and applies fusion-weight and region overrides.
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path, const Overrides& o) {
  if (path.empty()) throw InvalidInput("--checkpoint is required");
  auto [cfg, params] = load_model(path);
  if (o.r && *o.r != cfg.region)
    throw InvalidInput("--r " + std::to_string(*o.r) + " conflicts with checkpoint R=" + std::to_string(cfg.region));
  if (o.w1) cfg.w1 = *o.w1;
  if (o.w2) cfg.w2 = *o.w2;
  cfg.validate();
  return {cfg, std::move(params)};
}

WeightProfile profile_for(int r, const std::string& weights_path) {
  if (weights_path.empty()) return table1_weights(r);
  const json j = read_json(weights_path);
  const json& table = j.contains("annulus_table") ? j.at("annulus_table") : j;
  try {
    return weights_from_table(r, table.get<std::vector<double>>(), fs::path(weights_path).stem().string());
  } catch (const json::exception& e) {
    throw InvalidInput("weight table must be a JSON array of numbers: " + std::string(e.what()));
  }
}

void print_effective(const std::string& cmd, const json& j) {
  std::clog << "freqnet " << cmd << " config: " << j.dump() << '\n';
}

// --- stats -----------------------------------------------------------------

struct StatsArgs {
  std::string train_dir;
  int synthetic = 0;
  int scale = 4;
  std::string target_out;
};

std::vector<NamedImage> corpus(const std::string& dir, int synthetic, std::uint64_t seed) {
  if (!dir.empty() && synthetic > 0) throw InvalidInput("use either a training directory or --synthetic");
  if (synthetic > 0) return synthetic_images(synthetic, 128, seed);
  if (dir.empty()) throw InvalidInput("a training directory (or --synthetic N) is required");
  return load_dir(dir);
}

int cmd_stats(const StatsArgs& a, const Overrides& o) {
  require_out(o);
  const json file = config_file(o);
  const int r = o.r.value_or(file.contains("model") ? file["model"].value("region", kDefaultRegion) : kDefaultRegion);
  RegionSpec{r}.validate(kBlockSize);
  const auto seed = effective_seed(o, file);
  print_effective("stats", {{"r", r}, {"scale", a.scale}, {"seed", seed}});
  const auto images = corpus(a.train_dir, a.synthetic, seed);
  std::vector<FreqMaps> lr, hr;
  for (const auto& [name, img] : images) {
    const Image crop = center_crop_to_multiple(img, kBlockSize);
    if (crop.width == 0 || crop.height == 0) {
      std::clog << "freqnet: skipping " << name << " (smaller than one block)\n";
      continue;
    }
    const Image low = quantize8(bicubic_resize(crop, 1, a.scale));
    lr.push_back(plane_to_maps(bicubic_resize(luma_plane(low), a.scale, 1), {r}));
    if (!a.target_out.empty()) hr.push_back(plane_to_maps(luma_plane(crop), {r}));
  }
  if (lr.empty()) throw InvalidInput("no usable images for statistics");
  const ChannelStats stats = compute_channel_stats(lr);
  save_stats(o.out, stats);
  std::cout << json{{"r", r}, {"images", lr.size()}, {"samples", stats.sample_count}, {"stats_id", stats_id(stats)},
                    {"out", o.out}}
                   .dump()
            << '\n';
  if (!a.target_out.empty()) {
    const ChannelStats t = compute_channel_stats(hr);
    save_stats(a.target_out, t);
    std::cout << json{{"target_stats_id", stats_id(t)}, {"out", a.target_out}}.dump() << '\n';
  }
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string train_dir;
  int synthetic = 0;
  std::string stats;
  std::string target_stats;
  std::optional<int> iterations;
};

int cmd_train(const TrainArgs& a, const Overrides& o) {
  require_out(o);
  const json file = config_file(o);
  ModelConfig mcfg = file.contains("model") ? file.at("model").get<ModelConfig>() : ModelConfig{};
  TrainConfig tcfg = file.contains("train") ? file.at("train").get<TrainConfig>() : TrainConfig{};
  tcfg.seed = effective_seed(o, file);
  if (o.r) mcfg.region = *o.r;
  if (o.w1) mcfg.w1 = *o.w1;
  if (o.w2) mcfg.w2 = *o.w2;
  if (o.epsilon) tcfg.epsilon = *o.epsilon;
  if (a.iterations) tcfg.iterations = *a.iterations;
  mcfg.validate();
  tcfg.validate();
  (void)tcfg.weights(mcfg.region);
  print_effective("train", {{"model", mcfg}, {"train", tcfg}});

  const auto images = corpus(a.train_dir, a.synthetic, tcfg.seed);
  const auto pairs = make_patch_pairs(images, tcfg, tcfg.seed + 1);
  if (pairs.empty()) throw InvalidInput("no training patches could be cut from the corpus");
  StatsPair stats;
  if (a.stats.empty()) {
    stats = shared_stats(compute_channel_stats(lr_up_maps(pairs, mcfg.region, tcfg.scale)));
    fs::create_directories(o.out);
    save_stats(fs::path(o.out) / "stats.json", stats.input);
    std::clog << "freqnet: statistics computed from the training patches, saved to "
              << (fs::path(o.out) / "stats.json").string() << '\n';
  } else {
    stats = load_stats_pair(a.stats, a.target_stats);
  }
  TrainOptions opts;
  opts.out_dir = o.out;
  opts.on_log = [](const LogRecord& r) { std::cout << to_ndjson(r) << '\n'; };
  const TrainResult res = train(tcfg, mcfg, init_params(mcfg, tcfg.seed), pairs, stats, opts);
  std::clog << "freqnet: loss " << res.initial_loss << " -> " << res.final_loss << ", model written to "
            << (fs::path(o.out) / "model.fqw").string() << '\n';
  return 0;
}

// --- infer -----------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string stats;
  std::string target_stats;
  std::string input;
  std::string maps_out;
  int scale = 4;
};

int cmd_infer(const InferArgs& a, const Overrides& o) {
  require_out(o);
  const auto [cfg, params] = load_checkpoint(a.checkpoint, o);
  const StatsPair stats = load_stats_pair(a.stats, a.target_stats);
  const Image lr = align_to_blocks(read_png(a.input), cfg.block_size / a.scale, "input");
  const SrOutput sr = super_resolve(lr, params, cfg, stats, a.scale);
  write_png(o.out, sr.sr);
  if (!a.maps_out.empty()) write_freq_maps(a.maps_out, denormalize(sr.maps, stats.target));
  std::cout << json{{"out", o.out}, {"width", sr.sr.width}, {"height", sr.sr.height},
                    {"psnr_y_vs_bicubic_db", std::isinf(psnr_y(sr.sr, sr.bicubic)) ? json(nullptr)
                                                                                    : json(psnr_y(sr.sr, sr.bicubic))}}
                   .dump()
            << '\n';
  return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string stats;
  std::string target_stats;
  std::string eval_dir;
  std::string weights;
  int scale = 4;
};

int cmd_eval(const EvalArgs& a, const Overrides& o) {
  const auto [cfg, params] = load_checkpoint(a.checkpoint, o);
  const StatsPair stats = load_stats_pair(a.stats, a.target_stats);
  const WeightProfile w = profile_for(cfg.region, a.weights);
  const CharbonnierParams p{o.epsilon.value_or(1e-3)};
  p.validate();
  if (a.eval_dir.empty()) throw InvalidInput("--eval-dir is required");
  const EvalReport rep = evaluate(params, cfg, stats, load_dir(a.eval_dir), w, p, a.scale);
  const json j = rep.to_json();
  for (const auto& rec : j.at("images")) std::cout << rec.dump() << '\n';
  std::cout << j.at("aggregate").dump() << '\n';
  if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
  return 0;
}

// --- weights ---------------------------------------------------------------

struct WeightsArgs {
  std::string hr_dir;
  std::string lr_dir;
  int scale = 4;
};

int cmd_weights(const WeightsArgs& a, const Overrides& o) {
  require_out(o);
  if (a.hr_dir.empty() || a.lr_dir.empty()) throw InvalidInput("--hr-dir and --lr-dir are required");
  std::vector<GridPair> pairs;
  for (const auto& hp : list_pngs(a.hr_dir)) {
    const fs::path lp = fs::path(a.lr_dir) / hp.filename();
    if (!fs::exists(lp)) throw InvalidInput("no LR counterpart for " + hp.string());
    const Image hr = read_png(hp);
    Image lr = read_png(lp);
    if (lr.width * a.scale == hr.width && lr.height * a.scale == hr.height)
      lr = bicubic_resize(lr, a.scale, 1);
    if (lr.width != hr.width || lr.height != hr.height || hr.width % kBlockSize || hr.height % kBlockSize)
      throw InvalidInput("misaligned pair " + hp.string() + " / " + lp.string() +
                         ": LR-up must match HR and both must be multiples of 32");
    pairs.push_back({plane_to_blocks(luma_plane(hr)), plane_to_blocks(luma_plane(lr))});
  }
  if (pairs.empty()) throw InvalidInput("no PNG pairs in " + a.hr_dir);
  const ResidualProfile prof = region_residual_profile(pairs);
  const WeightProfile t1 = table1_weights(10);
  std::vector<std::string> labels;
  for (int k = 3; k <= 10; ++k) labels.push_back(annulus_label(k));
  const json j = {{"res", prof.res}, {"v", prof.v}, {"sample_count", prof.sample_count},
                  {"region_sizes", {3, 4, 5, 6, 7, 8, 9, 10}},
                  {"reference_profile", {{"id", t1.id}, {"annulus_labels", labels}, {"annulus_table", t1.annulus_table}}}};
  write_text(o.out, j.dump(2) + "\n");
  std::cout << j.dump() << '\n';
  return 0;
}

// --- merge -----------------------------------------------------------------

struct MergeArgs {
  std::string sr;
  std::string lr;
  std::string checkpoint;
  std::string stats;
  std::string target_stats;
  std::string selection;
  std::string fill_mode;
  int scale = 4;
};

int cmd_merge(const MergeArgs& a, const Overrides& o) {
  require_out(o);
  if (a.selection.empty()) throw InvalidInput("--selection is required (e.g. \"annulus:6-5,annulus:7-6\")");
  if (a.fill_mode.empty()) throw InvalidInput("--fill-mode {lr, sr} is required");
  const FillMode mode = parse_fill_mode(a.fill_mode);
  const auto [cfg, params] = load_checkpoint(a.checkpoint, o);
  const ChannelSelection sel = ChannelSelection::parse(a.selection, cfg.region);
  const StatsPair stats = load_stats_pair(a.stats, a.target_stats);

  const Image lr_full = read_png(a.lr), sr_full = read_png(a.sr);
  if (sr_full.width != lr_full.width * a.scale || sr_full.height != lr_full.height * a.scale)
    throw InvalidInput("SR image must be exactly " + std::to_string(a.scale) + "x the LR image");
  const Image lr = align_to_blocks(lr_full, cfg.block_size / a.scale, "LR image");
  const int ox = (lr_full.width - lr.width) / 2, oy = (lr_full.height - lr.height) / 2;
  const Image sr_img = crop(sr_full, ox * a.scale, oy * a.scale, lr.width * a.scale, lr.height * a.scale);

  const SrOutput net = super_resolve(lr, params, cfg, stats, a.scale);
  const ImageMaps sr_maps = image_to_maps(sr_img, cfg.region, cfg.block_size);
  const FreqMaps merged = merge_channels(sr_maps.maps, denormalize(net.maps, stats.target), sel);
  const Image out = reconstruct_merged(merged, mode == FillMode::lr ? net.fill : sr_maps.grid, chroma_of(sr_img));
  write_png(o.out, out);
  const double d = psnr_y(out, sr_img);
  std::cout << json{{"out", o.out}, {"channels_replaced", sel.channels.size()}, {"fill_mode", a.fill_mode},
                    {"psnr_y_vs_sr_db", std::isinf(d) ? json(nullptr) : json(d)}}
                   .dump()
            << '\n';
  return 0;
}

// --- selfcheck -------------------------------------------------------------

int cmd_selfcheck(int seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_selfcheck(seeds, std::cout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
  std::cout << (failed ? "selfcheck FAILED: " : "selfcheck passed: ") << results.size() - failed << "/"
            << results.size() << " checks in " << secs << " s\n";
  if (failed) throw SelfcheckFailed{};
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"FreqNet: DCT-domain 4x super-resolution"};
  app.require_subcommand(1);
  Overrides o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file (CLI flags take precedence)");
    sub->add_option("--seed", o.seed, "Seed for every random choice");
    sub->add_option("--r", o.r, "Retained DCT region size R");
    sub->add_option("--epsilon", o.epsilon, "Charbonnier epsilon");
    sub->add_option("--w1", o.w1, "SEN fusion weight");
    sub->add_option("--w2", o.w2, "FRN fusion weight");
    sub->add_option("--out", o.out, "Output path");
  };

  StatsArgs sa;
  auto* stats = app.add_subcommand("stats", "Per-channel statistics of upscaled-LR feature maps");
  common(stats);
  stats->add_option("--train-dir", sa.train_dir, "Directory of HR PNG images");
  stats->add_option("--synthetic", sa.synthetic, "Use N synthetic images instead of a directory");
  stats->add_option("--target-out", sa.target_out, "Also write HR-map statistics here (dual mode)");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model; --out is the run directory");
  common(trn);
  trn->add_option("--train-dir", ta.train_dir, "Directory of HR PNG images");
  trn->add_option("--synthetic", ta.synthetic, "Use N synthetic images instead of a directory");
  trn->add_option("--stats", ta.stats, "Input-map statistics (computed from the patches if omitted)");
  trn->add_option("--target-stats", ta.target_stats, "Separate HR-map statistics (dual mode)");
  trn->add_option("--iterations", ta.iterations, "Override the iteration count");

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Super-resolve one LR image");
  common(inf);
  inf->add_option("--checkpoint", ia.checkpoint, "Model weights (.fqw with .json sidecar)");
  inf->add_option("--stats", ia.stats, "Statistics file");
  inf->add_option("--target-stats", ia.target_stats, "Target statistics (dual mode)");
  inf->add_option("--input", ia.input, "LR PNG");
  inf->add_option("--maps-out", ia.maps_out, "Also write the predicted maps (FQM1)");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "PSNR-Y / L_freq / FRM over a directory of HR images");
  common(ev);
  ev->add_option("--checkpoint", ea.checkpoint, "Model weights");
  ev->add_option("--stats", ea.stats, "Statistics file");
  ev->add_option("--target-stats", ea.target_stats, "Target statistics (dual mode)");
  ev->add_option("--eval-dir", ea.eval_dir, "Directory of HR PNG images");
  ev->add_option("--weights", ea.weights, "JSON weight table (default: reference table)");

  WeightsArgs wa;
  auto* wt = app.add_subcommand("weights", "Region residual profile of aligned HR / LR pairs");
  common(wt);
  wt->add_option("--hr-dir", wa.hr_dir, "HR PNGs");
  wt->add_option("--lr-dir", wa.lr_dir, "LR or upscaled-LR PNGs with matching file names");

  MergeArgs ma;
  auto* mg = app.add_subcommand("merge", "Merge FreqNet channels into a third-party SR image");
  common(mg);
  mg->add_option("--sr", ma.sr, "Third-party SR PNG");
  mg->add_option("--lr", ma.lr, "LR PNG the SR image was produced from");
  mg->add_option("--checkpoint", ma.checkpoint, "Model weights");
  mg->add_option("--stats", ma.stats, "Statistics file");
  mg->add_option("--target-stats", ma.target_stats, "Target statistics (dual mode)");
  mg->add_option("--selection", ma.selection, "Channels, e.g. \"0-8,annulus:6-5,annulus:7-6\"");
  mg->add_option("--fill-mode", ma.fill_mode, "Out-of-band source: lr or sr");

  int sc_seeds = 3;
  auto* sc = app.add_subcommand("selfcheck", "Numerical self-tests");
  sc->add_option("--seeds", sc_seeds, "Random problems per gradient check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*stats) return cmd_stats(sa, o);
    if (*trn) return cmd_train(ta, o);
    if (*inf) return cmd_infer(ia, o);
    if (*ev) return cmd_eval(ea, o);
    if (*wt) return cmd_weights(wa, o);
    if (*mg) return cmd_merge(ma, o);
    if (*sc) return cmd_selfcheck(sc_seeds);
  } catch (const SelfcheckFailed&) {
    return kExitSelfcheck;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const json::exception& e) {
    std::cerr << "error: bad configuration: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInvalid;
}

}  // namespace freqnet
