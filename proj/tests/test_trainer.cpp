// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "freqnet/error.hpp"
#include "freqnet/trainer.hpp"
#include "support.hpp"

using namespace freqnet;
using namespace freqnet::test;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.feature_channels = 2;
  c.blocks_per_group = 1;
  c.sen_rg = 0;
  c.sen_drg = 1;
  c.frn_dwrg = 1;
  c.frn_rg = 0;
  c.region = 4;
  return c;
}

TrainConfig quick() {
  TrainConfig t;
  t.batch_size = 2;
  t.iterations = 6;
  t.log_interval = 2;
  t.coslr = {1e-3, 1e-5, 4};
  t.weight_table = {1, 2};
  return t;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("cosine schedule identities") {
    CHECK(cos_lr(0, 30, 1e-4, 1e-7) == 1e-4);
    CHECK(cos_lr(30, 30, 1e-4, 1e-7) == 1e-7);
    CHECK(cos_lr(15, 30, 1e-4, 1e-7) == doctest::Approx((1e-4 + 1e-7) / 2).epsilon(1e-14));
    CHECK(cos_lr(10, 30, 1.0, 0.0) == doctest::Approx(0.75));
    CHECK_THROWS_AS(cos_lr(31, 30, 1e-4, 1e-7), InvalidInput);
    CHECK_THROWS_AS(cos_lr(-1, 30, 1e-4, 1e-7), InvalidInput);
    for (int t = 0; t < 30; ++t) CHECK(cos_lr(t + 1, 30, 1.0, 0.1) < cos_lr(t, 30, 1.0, 0.1));
  }

  TEST_CASE("adam: zero gradients leave parameters alone and decay moments") {
    ModelParams p;
    p.set("a", Tensor::from({2}, {1.0, -1.0}, true));
    OptimizerState s;
    s.m["a"] = {0.5, 0.5};
    s.v["a"] = {0.25, 0.25};
    s.step = 3;
    // Gradient buffer exists but is zero.
    sum(scale(p.at("a"), 0.0)).backward();
    adam_step(p, s, 1e-3, {});
    CHECK(s.m["a"][0] == doctest::Approx(0.45));
    CHECK(s.v["a"][0] == doctest::Approx(0.2475));
    // Parameters still move from the stored momentum, but not from the gradient.
    ModelParams q;
    q.set("a", Tensor::from({1}, {2.0}, true));
    OptimizerState fresh;
    adam_step(q, fresh, 1e-3, {});
    CHECK(q.at("a").item() == 2.0);
  }

  TEST_CASE("adam: first step moves each parameter by about lr against the gradient") {
    Rng rng(70);
    for (int t = 0; t < 20; ++t) {
      ModelParams p;
      const double x0 = rand_real(rng, -5, 5), g = rand_real(rng, -100, 100);
      p.set("x", Tensor::from({1}, {x0}, true));
      sum(scale(p.at("x"), g)).backward();
      OptimizerState s;
      const double lr = 1e-4;
      adam_step(p, s, lr, {});
      // m_hat = g, v_hat = g^2 after bias correction.
      const double expect = x0 - lr * g / (std::abs(g) + 1e-8);
      CHECK(p.at("x").item() == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("adam: steps stay within lr / (1 - beta1)") {
    Rng rng(71);
    ModelParams p;
    p.set("w", rand_tensor(rng, {50}, true));
    OptimizerState s;
    const double lr = 1e-2;
    for (int step = 0; step < 200; ++step) {
      p.zero_grad();
      // Wildly varying gradients.
      const Tensor probe = Tensor::from({50}, rand_vec(rng, 50, -1000, 1000));
      sum(mul(p.at("w"), probe)).backward();
      const std::vector<double> before(p.at("w").data().begin(), p.at("w").data().end());
      adam_step(p, s, lr, {});
      for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(std::abs(p.at("w").data()[i] - before[i]) <= lr * (1 + 1e-9) / (1 - 0.9));
    }
  }

  TEST_CASE("adam: a quadratic decreases monotonically") {
    ModelParams p;
    p.set("x", Tensor::from({1}, {3.0}, true));
    OptimizerState s;
    double prev = 9.0;
    for (int i = 0; i < 2; ++i) {
      p.zero_grad();
      const Tensor l = sum(mul(p.at("x"), p.at("x")));
      l.backward();
      adam_step(p, s, 1e-4, {});
      const double now = p.at("x").item() * p.at("x").item();
      CHECK(now < prev);
      prev = now;
    }
  }

  TEST_CASE("adam: non-finite gradients abort with the parameter name") {
    ModelParams p;
    p.set("bad.w", Tensor::from({1}, {1.0}, true));
    sum(scale(p.at("bad.w"), std::nan(""))).backward();
    OptimizerState s;
    try {
      adam_step(p, s, 1e-3, {});
      FAIL("expected an exception");
    } catch (const RuntimeFailure& e) {
      CHECK(std::string(e.what()).find("bad.w") != std::string::npos);
      CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
    CHECK(p.at("bad.w").item() == 1.0);
    CHECK(s.step == 0);
  }

  TEST_CASE("optimizer state round trip") {
    const auto dir = temp_dir("optim");
    OptimizerState s;
    s.step = 12;
    s.m["a"] = {0.5, -0.25};
    s.v["a"] = {0.125, 1.0};
    save_optimizer(dir / "o.fqw", s);
    const OptimizerState t = load_optimizer(dir / "o.fqw");
    CHECK(t.step == 12);
    CHECK(t.m.at("a") == s.m.at("a"));
    CHECK(t.v.at("a") == s.v.at("a"));
  }

  TEST_CASE("patch pairs") {
    TrainConfig cfg;
    Image hr(64, 64, 1, 77.0);
    auto pairs = make_patch_pairs({{"flat", hr}}, cfg, 1);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].lr.width == 16);
    for (double v : pairs[0].lr.planes[0].data) CHECK(v == 77.0);

    Rng rng(72);
    const auto imgs = std::vector<NamedImage>{{"a", rand_image(rng, 200, 130, 3)}, {"b", rand_image(rng, 96, 300, 1)},
                                              {"small", rand_image(rng, 40, 40, 1)}};
    cfg.patches_per_image = 5;
    const auto p1 = make_patch_pairs(imgs, cfg, 9), p2 = make_patch_pairs(imgs, cfg, 9);
    REQUIRE(p1.size() == 10);
    for (std::size_t i = 0; i < p1.size(); ++i) {
      CHECK(p1[i].hr_x == p2[i].hr_x);
      CHECK(p1[i].hr_y == p2[i].hr_y);
      CHECK(p1[i].hr_x % 32 == 0);
      CHECK(p1[i].hr_y % 32 == 0);
      CHECK(p1[i].hr_x == 4 * p1[i].lr_x);
      CHECK(p1[i].hr_y == 4 * p1[i].lr_y);
      CHECK(p1[i].hr.width == 64);
      CHECK(p1[i].lr.height == 16);
      const Image& src = p1[i].source == "a" ? imgs[0].image : imgs[1].image;
      CHECK(p1[i].hr.planes[0].at(5, 7) == src.planes[0].at(p1[i].hr_x + 5, p1[i].hr_y + 7));
    }
    TrainConfig bad;
    bad.hr_patch = 48;
    CHECK_THROWS_AS(make_patch_pairs(imgs, bad, 1), InvalidInput);
  }

  TEST_CASE("prepare_sample") {
    Rng rng(73);
    TrainConfig cfg;
    const auto pairs = make_patch_pairs({{"a", rand_image(rng, 128, 128, 3)}}, cfg, 2);
    const ChannelStats st = compute_channel_stats(lr_up_maps(pairs, 10));
    const Sample s = prepare_sample(pairs[0], shared_stats(st));
    CHECK(s.lr_up.shape() == Shape{1, 1, 64, 64});
    CHECK(s.m_lr.channels() == 100);
    CHECK(s.m_lr.hb == 2);
    CHECK(s.m_hr.wb == 2);
    CHECK(s.m_lr.normalized);
    // Denormalized HR maps with HR fill reproduce the HR luma.
    const Plane y = luma_plane(pairs[0].hr);
    const BlockGrid fill = plane_to_blocks(y);
    const Plane back = blocks_to_plane(maps_to_blocks(denormalize(s.m_hr, st), fill));
    CHECK(max_abs_diff(back.data, y.data) < 1e-6);

    // Identical LR-up and HR content gives identical maps.
    PatchPair flat;
    flat.hr = Image(64, 64, 1, 90.0);
    flat.lr = Image(16, 16, 1, 90.0);
    const Sample f = prepare_sample(flat, shared_stats(st));
    CHECK(max_abs_diff(f.m_lr.data, f.m_hr.data) < 1e-9);

    ChannelStats other = st;
    other.r = 4;
    CHECK_THROWS_AS(prepare_sample(pairs[0], StatsPair{st, other}), InvalidInput);
  }

  TEST_CASE("training is deterministic and lr 0 keeps an identity model fixed") {
    const auto images = synthetic_images(4, 64, 5);
    TrainConfig cfg = quick();
    const auto pairs = make_patch_pairs(images, cfg, 3);
    ModelConfig m = tiny();
    const StatsPair st = shared_stats(compute_channel_stats(lr_up_maps(pairs, m.region)));

    const TrainResult a = train(cfg, m, init_params(m, 1), pairs, st);
    const TrainResult b = train(cfg, m, init_params(m, 1), pairs, st);
    REQUIRE(a.log.size() == 3);
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(to_ndjson(a.log[i]) == to_ndjson(b.log[i]));
    CHECK(a.log[0].lr == cos_lr(1, 4, 1e-3, 1e-5));

    m.w1 = 0.0;
    m.w2 = 1.0;
    cfg.coslr = {0.0, 0.0, 4};
    const TrainResult c = train(cfg, m, init_params(m, 1), pairs, st);
    CHECK(c.final_loss == c.initial_loss);
    CHECK(c.final_loss > 0);
  }

  TEST_CASE("training writes checkpoints and a metrics log") {
    const auto dir = temp_dir("train_out");
    TrainConfig cfg = quick();
    const auto pairs = make_patch_pairs(synthetic_images(2, 64, 6), cfg, 3);
    const ModelConfig m = tiny();
    const StatsPair st = shared_stats(compute_channel_stats(lr_up_maps(pairs, m.region)));
    TrainOptions opts;
    opts.out_dir = dir;
    train(cfg, m, init_params(m, 2), pairs, st, opts);
    CHECK(std::filesystem::exists(dir / "checkpoint.fqw"));
    CHECK(std::filesystem::exists(dir / "checkpoint.opt.fqw"));
    CHECK(std::filesystem::exists(dir / "model.fqw.json"));
    std::ifstream log(dir / "metrics.ndjson");
    std::string line;
    int n = 0;
    while (std::getline(log, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("iter"));
      CHECK(j.contains("frm"));
      ++n;
    }
    CHECK(n == 3);
    const auto [mc, mp] = load_model(dir / "model.fqw");
    CHECK(mc.region == 4);
  }

  TEST_CASE("train config JSON round trip and validation") {
    TrainConfig c = quick();
    c.seed = 99;
    const TrainConfig d = nlohmann::json(c).get<TrainConfig>();
    CHECK(nlohmann::json(d) == nlohmann::json(c));
    const TrainConfig partial = nlohmann::json{{"batch_size", 3}}.get<TrainConfig>();
    CHECK(partial.batch_size == 3);
    CHECK(partial.hr_patch == 64);
    c.scale = 3;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
  }

  TEST_CASE("identity model evaluates to the bicubic baseline") {
    Rng rng(75);
    ModelConfig m = tiny();
    m.w1 = 0.0;
    m.w2 = 1.0;
    const auto images = std::vector<NamedImage>{{"rgb", rand_image(rng, 96, 64, 3)}, {"gray", rand_image(rng, 64, 64, 1)}};
    TrainConfig cfg;
    const auto pairs = make_patch_pairs(images, cfg, 1);
    const StatsPair st = shared_stats(compute_channel_stats(lr_up_maps(pairs, m.region)));
    const ModelParams p = init_params(m, 3);
    for (const auto& [name, img] : images) {
      const Image lr = quantize8(bicubic_resize(img, 1, 4));
      const SrOutput out = super_resolve(lr, p, m, st);
      CHECK(std::abs(psnr_y(out.sr, img) - psnr_y(out.bicubic, img)) < 1e-6);
    }
    const EvalReport rep = evaluate(p, m, st, images, weights_from_table(4, {1, 2}), {});
    CHECK(rep.images.size() == 2);
    const auto j = rep.to_json();
    CHECK(j["images"].size() == 2);
    CHECK(j["aggregate"].contains("stats_id"));
    CHECK(j["aggregate"]["r"] == 4);
    CHECK_THROWS_AS(evaluate(p, m, st, images, table1_weights(10), {}), InvalidInput);
  }
}
