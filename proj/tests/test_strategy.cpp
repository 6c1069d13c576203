#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>
#include <vector>

#include "scsr/datagen.hpp"
#include "scsr/losses.hpp"
#include "scsr/rng.hpp"
#include "scsr/scnet.hpp"
#include "scsr/sensing.hpp"
#include "scsr/strategy.hpp"
#include "scsr/tensor.hpp"
#include "scsr/transforms.hpp"

using namespace scsr;

namespace {

SCNetConfig tiny_net() {
  SCNetConfig cfg;
  cfg.K = 2;
  cfg.C = 4;
  cfg.rho_mode = RhoMode::sigmoid_tau;
  cfg.use_final_gd = true;
  cfg.embed_h = 1;
  cfg.embed_w = 4;
  cfg.conv_dim = 1;
  return cfg;
}

MeasurementDataset<double> toy_set(int64_t count, int64_t M, int64_t N, uint64_t seed) {
  MeasurementDataset<double> set;
  set.A = std::make_shared<SamplingMatrixD>(gen_gaussian_orthonormal_d(M, N, seed));
  set.H = 1;
  set.W = N;
  ToySpec spec;
  spec.dist = ToyDist::gm;
  spec.n_signals = count;
  spec.n_train = count;
  spec.n_test = 0;
  spec.dim = N;
  spec.seed = seed;
  ToyDataset toy = gen_toy_dataset(spec);
  set.x = toy.train;
  set.y = TensorD({count, M});
  for (int64_t i = 0; i < count; ++i)
    for (int64_t m = 0; m < M; ++m) {
      double acc = 0.0;
      for (int64_t n = 0; n < N; ++n) acc += set.A->data.at(m * N + n) * set.x.at(i * N + n);
      set.y.at(i * M + m) = acc;
    }
  return set;
}

}  // namespace

TEST_CASE("stage schedule tables") {
  // stage 1: backbone only; stage 2 adds image vectors; 3 adds the grid;
  // stage 4 trains nothing and only consumes what exists
  CHECK_FALSE(stage_embeddings(1).img);
  CHECK_FALSE(stage_embeddings(1).pos);
  CHECK(stage_embeddings(2).img);
  CHECK_FALSE(stage_embeddings(2).pos);
  CHECK(stage_embeddings(3).img);
  CHECK(stage_embeddings(3).pos);
  CHECK(stage_embeddings(4).img);
  CHECK(stage_embeddings(4).pos);
  CHECK_THROWS_AS(stage_embeddings(5), std::invalid_argument);

  CHECK(stage_mask(1).backbone);
  CHECK(stage_mask(1).tau);
  CHECK_FALSE(stage_mask(1).e_img);
  CHECK(stage_mask(2).e_img);
  CHECK_FALSE(stage_mask(2).e_pos);
  CHECK(stage_mask(3).e_pos);
  TrainMask m4 = stage_mask(4);
  CHECK_FALSE(m4.backbone);
  CHECK_FALSE(m4.tau);
  CHECK_FALSE(m4.e_img);
  CHECK_FALSE(m4.e_pos);
}

TEST_CASE("default plans and their validation") {
  for (int s = 1; s <= 4; ++s) {
    StagePlan p = default_plan(s);
    CHECK(p.stage == s);
    CHECK_NOTHROW(p.validate());
  }
  CHECK(default_plan(1).batch == 0);
  CHECK(default_plan(2).batch == 1);
  CHECK(default_plan(3).batch == 1);
  CHECK(default_plan(4).iters == 0);
  CHECK_THROWS_AS(default_plan(0), std::invalid_argument);
  CHECK_THROWS_AS(default_plan(5), std::invalid_argument);

  StagePlan bad = default_plan(2);
  bad.batch = 4;  // per-image stages adapt exactly one sample per step
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = default_plan(1);
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = default_plan(4);
  bad.ensemble_r = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = default_plan(4);
  bad.ensemble_D = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("dataset gather") {
  auto set = toy_set(6, 4, 16, 11);
  TrainBatch<double> tb = set.gather({2, 5});
  CHECK(tb.B == 2);
  CHECK(tb.H == 1);
  CHECK(tb.W == 16);
  CHECK(tb.A.get() == set.A.get());
  for (int64_t m = 0; m < 4; ++m) {
    CHECK(tb.y.at(0 * 4 + m) == set.y.at(2 * 4 + m));
    CHECK(tb.y.at(1 * 4 + m) == set.y.at(5 * 4 + m));
  }
  for (int64_t n = 0; n < 16; ++n) CHECK(tb.x.at(n) == set.x.at(2 * 16 + n));
  CHECK_THROWS(set.gather({6}));
}

TEST_CASE("frozen objective replays bit-for-bit") {
  auto set = toy_set(4, 4, 16, 12);
  SCNetConfig ncfg = tiny_net();
  Rng prng = make_rng(12, 1);
  auto params = init_params<double>(ncfg, prng);
  LossConfig lcfg;
  lcfg.p = 2.0;
  lcfg.alpha = 0.2;
  lcfg.sigma = 0.01;

  double a = frozen_objective(Scheme::dmc_doc, lcfg, ncfg, params, set, 99);
  double b = frozen_objective(Scheme::dmc_doc, lcfg, ncfg, params, set, 99);
  CHECK(a == b);
  double c = frozen_objective(Scheme::dmc_doc, lcfg, ncfg, params, set, 100);
  CHECK(a != c);

  // moving a parameter moves the objective
  params.fext_w.at(0) += 0.05;
  double d = frozen_objective(Scheme::dmc_doc, lcfg, ncfg, params, set, 99);
  CHECK(d != a);
}

TEST_CASE("whole-set inference matches per-image inference") {
  auto set = toy_set(3, 4, 16, 13);
  SCNetConfig ncfg = tiny_net();
  Rng prng = make_rng(13, 1);
  auto params = init_params<double>(ncfg, prng);
  params.ensure_img(1).at(0) = 0.3;  // one image carries an embedding
  params.ensure_pos(1).at(1) = -0.2;

  TensorD all = infer_set(ncfg, params, set);
  REQUIRE(all.shape == std::vector<int64_t>{3, 16});

  std::shared_ptr<const BatchedOp<double>> op = DenseBOp<double>::from(*set.A);
  for (int64_t i = 0; i < 3; ++i) {
    TensorD yi({1, 4});
    for (int64_t m = 0; m < 4; ++m) yi.at(m) = set.y.at(i * 4 + m);
    bool has = params.e_img.count(i) > 0;
    TensorD one = scnet_infer(ncfg, params, yi, op, 1, 1, 16,
                              has ? std::optional<int64_t>(i) : std::nullopt,
                              EmbedActive{has, has});
    for (int64_t n = 0; n < 16; ++n) CHECK(all.at(i * 16 + n) == one.at(n));
  }
}

TEST_CASE("stage-1 training reduces its own frozen objective and checkpoints a handoff") {
  auto set = toy_set(6, 6, 16, 14);
  SCNetConfig ncfg = tiny_net();
  Rng prng = make_rng(14, 1);
  auto params = init_params<double>(ncfg, prng);
  LossConfig lcfg;
  lcfg.p = 2.0;
  lcfg.alpha = 0.1;

  StagePlan plan = default_plan(1);
  plan.iters = 60;
  plan.finetune_iters = 10;
  plan.lr = 3e-3;
  plan.lr_finetune = 1e-3;

  double before = frozen_objective(Scheme::dmc, lcfg, ncfg, params, set, 77);
  std::ostringstream log;
  run_stage1(Scheme::dmc, lcfg, ncfg, params, set, plan, 42, &log, "strategy_test_s1");
  double after = frozen_objective(Scheme::dmc, lcfg, ncfg, params, set, 77);
  CHECK(after < before);

  // the stage checkpoint restores the exact trained state
  auto restored = load_checkpoint<double>("strategy_test_s1_final.scsc");
  double again = frozen_objective(Scheme::dmc, lcfg, ncfg, restored, set, 77);
  CHECK(again == after);
  std::remove("strategy_test_s1_final.scsc");

  // identical seeds retrain to identical parameters
  Rng prng2 = make_rng(14, 1);
  auto params2 = init_params<double>(ncfg, prng2);
  run_stage1(Scheme::dmc, lcfg, ncfg, params2, set, plan, 42, nullptr, "");
  CHECK(max_abs_diff(params2.fext_w, params.fext_w) == 0.0);
  CHECK(max_abs_diff(params2.frec_w, params.frec_w) == 0.0);
}

TEST_CASE("stage-2 and stage-3 adaptation work per image") {
  auto set = toy_set(3, 6, 16, 15);
  SCNetConfig ncfg = tiny_net();
  Rng prng = make_rng(15, 1);
  auto params = init_params<double>(ncfg, prng);
  LossConfig lcfg;
  lcfg.p = 2.0;
  lcfg.alpha = 0.1;

  StagePlan p2 = default_plan(2);
  p2.iters = 30;
  p2.finetune_iters = 0;
  p2.lr = 2e-3;
  run_stage2(Scheme::dmc, lcfg, ncfg, params, set, p2, 7, nullptr);
  // stage 2 registers an image vector per test image, but no grids
  CHECK(params.e_img.size() == 3);
  CHECK(params.e_pos.empty());

  StagePlan p3 = default_plan(3);
  p3.iters = 20;
  p3.finetune_iters = 0;
  p3.lr = 2e-3;
  run_stage3(Scheme::dmc, lcfg, ncfg, params, set, 1, p3, 7, nullptr);
  CHECK(params.e_pos.count(1) == 1);  // grid only for the adapted image
  CHECK(params.e_pos.size() == 1);

  CHECK_THROWS_AS(run_stage3(Scheme::dmc, lcfg, ncfg, params, set, 9, p3, 7, nullptr),
                  std::invalid_argument);
}

TEST_CASE("masked self-ensemble") {
  auto set = toy_set(1, 6, 16, 16);
  SCNetConfig ncfg = tiny_net();
  Rng prng = make_rng(16, 1);
  auto params = init_params<double>(ncfg, prng);
  TensorD y({1, 6});
  for (int64_t m = 0; m < 6; ++m) y.at(m) = set.y.at(m);

  SUBCASE("a single unmasked identity draw is plain inference with zero spread") {
    Rng rng = make_rng(16, 2);
    auto res = ensemble_stage4(ncfg, params, y, *set.A, 1, 16, std::nullopt, {}, 1, 0.0, rng,
                               TransformDomain::identity_only);
    std::shared_ptr<const BatchedOp<double>> op = DenseBOp<double>::from(*set.A);
    TensorD plain = scnet_infer(ncfg, params, y, op, 1, 1, 16, std::nullopt, {});
    CHECK(max_abs_diff(res.mean, plain) == 0.0);
    for (int64_t n = 0; n < 16; ++n) CHECK(res.std.at(n) == 0.0);
  }
  SUBCASE("identical draws collapse the spread at any D") {
    Rng rng = make_rng(16, 3);
    auto res = ensemble_stage4(ncfg, params, y, *set.A, 1, 16, std::nullopt, {}, 4, 0.0, rng,
                               TransformDomain::identity_only);
    std::shared_ptr<const BatchedOp<double>> op = DenseBOp<double>::from(*set.A);
    TensorD plain = scnet_infer(ncfg, params, y, op, 1, 1, 16, std::nullopt, {});
    for (int64_t n = 0; n < 16; ++n) CHECK(res.std.at(n) == 0.0);
    CHECK(max_abs_diff(res.mean, plain) < 1e-12);
  }
  SUBCASE("masking and transforms spread the draws") {
    Rng rng = make_rng(16, 4);
    auto res = ensemble_stage4(ncfg, params, y, *set.A, 1, 16, std::nullopt, {}, 6, 0.3, rng);
    double total = 0.0;
    for (int64_t n = 0; n < 16; ++n) {
      CHECK(res.std.at(n) >= 0.0);
      total += res.std.at(n);
    }
    CHECK(total > 0.0);

    Rng rng2 = make_rng(16, 4);
    auto rep = ensemble_stage4(ncfg, params, y, *set.A, 1, 16, std::nullopt, {}, 6, 0.3, rng2);
    CHECK(max_abs_diff(res.mean, rep.mean) == 0.0);
    CHECK(max_abs_diff(res.std, rep.std) == 0.0);
  }
  SUBCASE("input validation") {
    Rng rng = make_rng(16, 5);
    CHECK_THROWS_AS(
        ensemble_stage4(ncfg, params, y, *set.A, 1, 16, std::nullopt, {}, 0, 0.0, rng),
        std::invalid_argument);
    CHECK_THROWS_AS(
        ensemble_stage4(ncfg, params, y, *set.A, 1, 16, std::nullopt, {}, 2, 1.5, rng),
        std::invalid_argument);
    CHECK_THROWS_AS(
        ensemble_stage4(ncfg, params, y, *set.A, 2, 16, std::nullopt, {}, 2, 0.0, rng),
        std::invalid_argument);
  }
}

TEST_CASE("pipeline configuration validation") {
  PipelineConfig cfg;
  cfg.ncfg = tiny_net();
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // no stages

  cfg.stages = {default_plan(2), default_plan(1)};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // out of order

  cfg.stages = {default_plan(1), default_plan(1)};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // duplicate

  cfg.stages = {default_plan(1), default_plan(3)};
  CHECK_NOTHROW(cfg.validate());  // gaps are fine
}

TEST_CASE("four-stage pipeline smoke run") {
  auto train = toy_set(6, 6, 16, 17);
  auto test = toy_set(3, 6, 16, 18);
  // share the operator: adaptation happens on the same sensing setup
  test.A = train.A;
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t m = 0; m < 6; ++m) {
      double acc = 0.0;
      for (int64_t n = 0; n < 16; ++n) acc += train.A->data.at(m * 16 + n) * test.x.at(i * 16 + n);
      test.y.at(i * 6 + m) = acc;
    }

  PipelineConfig cfg;
  cfg.ncfg = tiny_net();
  cfg.scheme = Scheme::dmc;
  cfg.lcfg.p = 2.0;
  cfg.lcfg.alpha = 0.1;
  cfg.seed = 21;
  StagePlan s1 = default_plan(1);
  s1.iters = 40;
  s1.finetune_iters = 0;
  s1.lr = 3e-3;
  StagePlan s2 = default_plan(2);
  s2.iters = 10;
  s2.finetune_iters = 0;
  s2.lr = 1e-3;
  StagePlan s3 = default_plan(3);
  s3.iters = 8;
  s3.finetune_iters = 0;
  s3.lr = 1e-3;
  StagePlan s4 = default_plan(4);
  s4.ensemble_D = 3;
  s4.ensemble_r = 0.2;
  cfg.stages = {s1, s2, s3, s4};

  Rng prng = make_rng(21, 1);
  auto params = init_params<double>(cfg.ncfg, prng);
  std::ostringstream log;
  auto result = run_pipeline(cfg, params, train, test, &log);

  REQUIRE(result.reports.size() == 4);
  for (size_t i = 0; i < 4; ++i) CHECK(result.reports[i].stage == int(i + 1));
  REQUIRE(result.recon.shape == std::vector<int64_t>{3, 16});
  REQUIRE(result.uncertainty.shape == std::vector<int64_t>{3, 16});
  for (int64_t i = 0; i < result.uncertainty.numel(); ++i)
    CHECK(result.uncertainty.at(i) >= 0.0);

  // without a stage 4 the uncertainty map is absent and recon is plain inference
  PipelineConfig cfg13 = cfg;
  cfg13.stages = {s1, s2, s3};
  Rng prng2 = make_rng(21, 1);
  auto params2 = init_params<double>(cfg.ncfg, prng2);
  auto r13 = run_pipeline(cfg13, params2, train, test, nullptr);
  CHECK(r13.uncertainty.empty());
  REQUIRE(r13.recon.shape == std::vector<int64_t>{3, 16});

  // a stage-4-at-D-1 run with no masking reproduces the stage-3 reconstruction
  PipelineConfig cfgd1 = cfg;
  StagePlan s4d1 = s4;
  s4d1.ensemble_D = 1;
  s4d1.ensemble_r = 0.0;
  cfgd1.stages = {s1, s2, s3, s4d1};
  Rng prng3 = make_rng(21, 1);
  auto params3 = init_params<double>(cfg.ncfg, prng3);
  auto rd1 = run_pipeline(cfgd1, params3, train, test, nullptr);
  for (int64_t i = 0; i < rd1.uncertainty.numel(); ++i) CHECK(rd1.uncertainty.at(i) == 0.0);
}
