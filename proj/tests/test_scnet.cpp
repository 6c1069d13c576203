#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "scsr/autodiff.hpp"
#include "scsr/io_binary.hpp"
#include "scsr/rng.hpp"
#include "scsr/scnet.hpp"
#include "scsr/sensing.hpp"
#include "scsr/tensor.hpp"

using namespace scsr;
using TapeD = Tape<double>;

// frozen reference values (tests/oracles/gen_oracles.py)
static const double kCubic2to4[8] = {1.10546875, -0.10546875, 0.7734375, 0.2265625,
                                     0.2265625,  0.7734375,   -0.10546875, 1.10546875};
static const double kRbZ[9] = {1, -2, 0.5, 0, 3, -1, 2, -0.5, 1.5};
static const double kRbK1[9] = {0, 0.5, 0, 0.5, -1, 0.5, 0, 0.5, 0};
static const double kRbK2[9] = {0.25, 0, -0.25, 0, 1, 0, -0.25, 0, 0.25};
static const double kRbOut[9] = {0.80000000000000004, 2.2749999999999995, 0.29999999999999999,
                                 2.7750000000000004,  2.7999999999999998, 2.5249999999999999,
                                 1.8,                 3.0249999999999999, 1.3};

namespace {

SCNetConfig tiny_cfg_1d(int64_t K = 2, int64_t C = 4) {
  SCNetConfig cfg;
  cfg.K = K;
  cfg.C = C;
  cfg.rho_mode = RhoMode::fixed_one;
  cfg.use_final_gd = true;
  cfg.embed_h = 1;
  cfg.embed_w = 4;
  cfg.conv_dim = 1;
  return cfg;
}

template <typename T>
std::shared_ptr<const BatchedOp<T>> dense_op(const SamplingMatrixT<T>& A) {
  auto shared = std::make_shared<Tensor<T>>(A.data);
  return std::make_shared<DenseBOp<T>>(shared, A.M, A.N, A.gamma, T(1));
}

}  // namespace

TEST_CASE("config validation rejects bad shapes") {
  SCNetConfig cfg = tiny_cfg_1d();
  CHECK_NOTHROW(cfg.validate());
  SCNetConfig bad = cfg;
  bad.K = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.C = -3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.conv_dim = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.embed_w = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("init_params shapes, bounds, and determinism") {
  SCNetConfig cfg;
  cfg.K = 3;
  cfg.C = 8;
  cfg.conv_dim = 2;
  cfg.rho_mode = RhoMode::sigmoid_tau;
  Rng rng = make_rng(77, 1);
  auto p = init_params<double>(cfg, rng);

  CHECK(p.fext_w.numel() == 9 * 2 * 8);
  CHECK(p.fext_b.numel() == 8);
  REQUIRE(p.blocks.size() == 3);
  for (const auto& b : p.blocks) {
    CHECK(b.w1.numel() == 9 * 8 * 8);
    CHECK(b.b1.numel() == 8);
    CHECK(b.w2.numel() == 9 * 8 * 8);
    CHECK(b.b2.numel() == 8);
  }
  CHECK(p.frec_w.numel() == 9 * 8);
  CHECK(p.frec_b.numel() == 1);
  REQUIRE(p.tau.numel() == 1);
  // step size starts at sigmoid(tau) = 0.9
  CHECK(1.0 / (1.0 + std::exp(-p.tau.at(0))) == doctest::Approx(0.9).epsilon(1e-12));

  // He-uniform bound for the extractor: sqrt(6 / fan_in), fan_in = 18
  double bound = std::sqrt(6.0 / 18.0);
  for (double v : p.fext_w.data) CHECK(std::abs(v) <= bound);
  for (double v : p.fext_b.data) CHECK(v == 0.0);

  Rng rng2 = make_rng(77, 1);
  auto q = init_params<double>(cfg, rng2);
  CHECK(max_abs_diff(p.fext_w, q.fext_w) == 0.0);
  CHECK(max_abs_diff(p.blocks[2].w2, q.blocks[2].w2) == 0.0);

  SCNetConfig fixed = cfg;
  fixed.rho_mode = RhoMode::fixed_one;
  Rng rng3 = make_rng(77, 1);
  auto r = init_params<double>(fixed, rng3);
  CHECK(r.tau.numel() == 0);  // no step-size parameter in fixed mode
}

TEST_CASE("upsample matrix: identity, constants, frozen 2->4 weights") {
  SUBCASE("same size is the exact identity") {
    auto W = upsample_matrix<double>(3, 5, 3, 5);
    REQUIRE(W->numel() == 15 * 15);
    for (int64_t i = 0; i < 15; ++i)
      for (int64_t j = 0; j < 15; ++j) CHECK(W->at(i * 15 + j) == (i == j ? 1.0 : 0.0));
  }
  SUBCASE("rows sum to one so constants are preserved") {
    auto W = upsample_matrix<double>(7, 6, 3, 2);
    for (int64_t i = 0; i < 42; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < 6; ++j) s += W->at(i * 6 + j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("1-D 2->4 axis weights match the hand computation") {
    auto W = upsample_matrix<double>(1, 4, 1, 2);
    REQUIRE(W->numel() == 8);
    for (int64_t i = 0; i < 8; ++i) CHECK(W->at(i) == doctest::Approx(kCubic2to4[i]).epsilon(1e-12));
  }
}

TEST_CASE("residual block composition reproduces the hand-worked 3x3 example") {
  // one K-module body: X = Z + conv(relu(conv(Z)))
  TapeD tape;
  TensorD z({1, 9, 1});
  for (int i = 0; i < 9; ++i) z.at(i) = kRbZ[i];
  TensorD w1({9, 1}), w2({9, 1});
  for (int i = 0; i < 9; ++i) {
    w1.at(i) = kRbK1[i];
    w2.at(i) = kRbK2[i];
  }
  TensorD b1({1}, 0.1), b2({1}, -0.2);
  auto zi = tape.leaf(z);
  auto h = tape.relu(tape.conv2d(zi, tape.leaf(w1), tape.leaf(b1), 1, 3, 3, 1, 1));
  auto out = tape.add(zi, tape.conv2d(h, tape.leaf(w2), tape.leaf(b2), 1, 3, 3, 1, 1));
  const TensorD& ov = tape.val(out);
  for (int i = 0; i < 9; ++i) CHECK(ov.at(i) == doctest::Approx(kRbOut[i]).epsilon(1e-12));
}

TEST_CASE("measurement consistency and nullspace invariance with orthonormal rows") {
  // fixed rho=1 plus the trailing gradient step pin A xhat = y exactly
  const int64_t M = 8, N = 32, B = 3;
  SCNetConfig cfg = tiny_cfg_1d(2, 4);
  Rng rng = make_rng(101, 2);
  for (int trial = 0; trial < 5; ++trial) {
    auto A = gen_gaussian_orthonormal(M, N, 500 + uint64_t(trial));
    auto op = dense_op<float>(A);
    Rng prng = make_rng(101, 3, uint64_t(trial));
    auto params = init_params<float>(cfg, prng);

    Tensor<float> y({B, M});
    for (auto& v : y.data) v = float(rng.normal());

    Tape<float> tape;
    auto bind = bind_net(tape, params, TrainMask{false, false, false, false}, std::nullopt, {});
    auto yid = tape.leaf(y);
    auto fr = scnet_forward(tape, cfg, bind, yid, op, B, 1, N, {});
    tape.keep(fr.xhat);
    tape.keep(fr.u);
    const Tensor<float>& xhat = tape.val(fr.xhat);
    const Tensor<float>& u = tape.val(fr.u);

    // || A xhat - y ||_inf
    float worst = 0.0f;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < M; ++i) {
        float acc = 0.0f;
        for (int64_t j = 0; j < N; ++j) acc += A.data.at(i * N + j) * xhat.at(b * N + j);
        worst = std::max(worst, std::abs(acc - y.at(b * M + i)));
      }
    CHECK(worst < 1e-4f);

    // xhat - u lies in range(A^T): (I - A^T A)(xhat - u) = 0
    float ns = 0.0f;
    for (int64_t b = 0; b < B; ++b) {
      std::vector<float> d(size_t(N), 0.0f);
      for (int64_t j = 0; j < N; ++j) d[size_t(j)] = xhat.at(b * N + j) - u.at(b * N + j);
      std::vector<float> Ad(size_t(M), 0.0f);
      for (int64_t i = 0; i < M; ++i)
        for (int64_t j = 0; j < N; ++j) Ad[size_t(i)] += A.data.at(i * N + j) * d[size_t(j)];
      for (int64_t j = 0; j < N; ++j) {
        float back = 0.0f;
        for (int64_t i = 0; i < M; ++i) back += A.data.at(i * N + j) * Ad[size_t(i)];
        ns = std::max(ns, std::abs(d[size_t(j)] - back));
      }
    }
    CHECK(ns < 1e-4f);
  }
}

TEST_CASE("zero embeddings are exactly neutral") {
  const int64_t M = 6, N = 16, B = 2;
  SCNetConfig cfg = tiny_cfg_1d(2, 4);
  cfg.embed_h = 1;
  cfg.embed_w = 4;
  auto A = gen_gaussian_orthonormal_d(M, N, 91);
  auto op = dense_op<double>(A);
  Rng prng = make_rng(12, 5);
  auto params = init_params<double>(cfg, prng);
  Rng yr = make_rng(12, 6);
  TensorD y({B, M});
  for (auto& v : y.data) v = yr.normal();

  TensorD plain = scnet_infer(cfg, params, y, op, B, 1, N, std::nullopt, {});
  // fresh embeddings start at zero, so switching them on changes nothing
  params.ensure_img(7);
  params.ensure_pos(7);
  TensorD with_e = scnet_infer(cfg, params, y, op, B, 1, N, 7, EmbedActive{true, true});
  CHECK(max_abs_diff(plain, with_e) == 0.0);
  CHECK(params.e_img.count(7) == 1);
  CHECK(params.e_pos.count(7) == 1);
  CHECK(params.e_img.at(7).numel() == cfg.C);
  CHECK(params.e_pos.at(7).numel() == cfg.embed_h * cfg.embed_w * cfg.C);

  // a nonzero image embedding must change the output
  params.e_img.at(7).at(0) = 0.5;
  TensorD moved = scnet_infer(cfg, params, y, op, B, 1, N, 7, EmbedActive{true, true});
  CHECK(max_abs_diff(plain, moved) > 1e-8);
}

TEST_CASE("saturated learnable step matches the fixed-step network") {
  const int64_t M = 4, N = 12, B = 2;
  SCNetConfig fixed = tiny_cfg_1d(2, 4);
  SCNetConfig learned = fixed;
  learned.rho_mode = RhoMode::sigmoid_tau;

  Rng r1 = make_rng(21, 7);
  auto pf = init_params<double>(fixed, r1);
  Rng r2 = make_rng(21, 7);
  auto pl = init_params<double>(learned, r2);
  // same draws for the conv stack; only tau differs
  CHECK(max_abs_diff(pf.fext_w, pl.fext_w) == 0.0);
  pl.tau.at(0) = 40.0;  // sigmoid(40) rounds to exactly 1.0 in double

  auto A = gen_gaussian_orthonormal_d(M, N, 17);
  auto op = dense_op<double>(A);
  Rng yr = make_rng(21, 8);
  TensorD y({B, M});
  for (auto& v : y.data) v = yr.normal();

  TensorD a = scnet_infer(fixed, pf, y, op, B, 1, N, std::nullopt, {});
  TensorD b = scnet_infer(learned, pl, y, op, B, 1, N, std::nullopt, {});
  CHECK(max_abs_diff(a, b) == 0.0);

  pl.tau.at(0) = 0.0;  // step 0.5 must produce a different trajectory
  TensorD c = scnet_infer(learned, pl, y, op, B, 1, N, std::nullopt, {});
  CHECK(max_abs_diff(a, c) > 1e-9);
}

TEST_CASE("bind_net exposes exactly the requested parameter groups") {
  SCNetConfig cfg = tiny_cfg_1d(3, 4);
  cfg.rho_mode = RhoMode::sigmoid_tau;
  Rng rng = make_rng(31, 9);
  auto params = init_params<double>(cfg, rng);

  TapeD t1;
  auto all = bind_net(t1, params, TrainMask{true, true, false, false}, std::nullopt, {});
  // fext_w/b + 3 blocks * 4 + frec_w/b + tau
  CHECK(all.bound.size() == 2 + 12 + 2 + 1);

  TapeD t2;
  auto none = bind_net(t2, params, TrainMask{false, false, false, false}, std::nullopt, {});
  CHECK(none.bound.empty());

  TapeD t3;
  params.ensure_img(4);
  params.ensure_pos(4);
  auto emb = bind_net(t3, params, TrainMask{false, false, true, true}, 4, EmbedActive{true, true});
  CHECK(emb.bound.size() == 2);
  CHECK(params.e_img.count(4) == 1);

  // bound pairs point at distinct parameter tensors
  TapeD t4;
  auto again = bind_net(t4, params, TrainMask{true, true, true, true}, 4, EmbedActive{true, true});
  CHECK(again.bound.size() == 2 + 12 + 2 + 1 + 2);
  for (size_t i = 0; i < again.bound.size(); ++i)
    for (size_t j = i + 1; j < again.bound.size(); ++j)
      CHECK(again.bound[i].first != again.bound[j].first);
}

TEST_CASE("taped forward agrees with the convenience inference call") {
  const int64_t M = 5, N = 18, B = 2;
  SCNetConfig cfg = tiny_cfg_1d(2, 4);
  cfg.rho_mode = RhoMode::sigmoid_tau;
  auto A = gen_gaussian_orthonormal_d(M, N, 33);
  auto op = dense_op<double>(A);
  Rng prng = make_rng(41, 10);
  auto params = init_params<double>(cfg, prng);
  Rng yr = make_rng(41, 11);
  TensorD y({B, M});
  for (auto& v : y.data) v = yr.normal();

  TapeD tape;
  auto bind = bind_net(tape, params, TrainMask{false, false, false, false}, std::nullopt, {});
  auto fr = scnet_forward(tape, cfg, bind, tape.leaf(y), op, B, 1, N, {});
  tape.keep(fr.xhat);
  TensorD via_tape = tape.val(fr.xhat);
  TensorD via_infer = scnet_infer(cfg, params, y, op, B, 1, N, std::nullopt, {});
  CHECK(max_abs_diff(via_tape, via_infer) == 0.0);
}

TEST_CASE("checkpoint roundtrip is bit-exact and rejects foreign files") {
  SCNetConfig cfg = tiny_cfg_1d(2, 4);
  cfg.rho_mode = RhoMode::sigmoid_tau;
  Rng rng = make_rng(51, 12);
  auto params = init_params<double>(cfg, rng);
  params.ensure_img(3).at(1) = 0.25;
  params.ensure_pos(3).at(2) = -0.75;

  const std::string path = "scnet_ckpt_test.scsc";
  save_checkpoint(path, params);
  auto back = load_checkpoint<double>(path);
  CHECK(back.cfg.K == cfg.K);
  CHECK(back.cfg.C == cfg.C);
  CHECK(back.cfg.conv_dim == cfg.conv_dim);
  CHECK(max_abs_diff(back.fext_w, params.fext_w) == 0.0);
  CHECK(max_abs_diff(back.blocks[1].w2, params.blocks[1].w2) == 0.0);
  CHECK(max_abs_diff(back.tau, params.tau) == 0.0);
  REQUIRE(back.e_img.count(3) == 1);
  CHECK(back.e_img.at(3).at(1) == 0.25);
  CHECK(back.e_pos.at(3).at(2) == -0.75);

  // corrupt the magic
  {
    FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f != nullptr);
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint<double>(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("single-precision cast stays close to the double parameters") {
  SCNetConfig cfg = tiny_cfg_1d(2, 4);
  Rng rng = make_rng(61, 13);
  auto pd = init_params<double>(cfg, rng);
  pd.ensure_img(0).at(0) = 0.125;  // exactly representable
  auto pf = pd.template cast<float>();
  CHECK(pf.cfg.K == cfg.K);
  CHECK(double(pf.fext_w.at(0)) == doctest::Approx(pd.fext_w.at(0)).epsilon(1e-7));
  CHECK(pf.e_img.at(0).at(0) == 0.125f);
  auto pd2 = pf.template cast<double>();
  CHECK(max_abs_diff(pd2.e_img.at(0), pd.e_img.at(0)) == 0.0);
}
