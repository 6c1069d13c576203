#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "scsr/rng.hpp"
#include "scsr/sensing.hpp"
#include "scsr/tensor.hpp"

using namespace scsr;

namespace {

TensorF randn_tensor(std::vector<int64_t> shape, Rng& rng) {
  TensorF t(std::move(shape));
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

// Plain triple-loop matvec, the reference all operator paths are checked against.
TensorF ref_apply(const SamplingMatrix& A, const TensorF& x) {
  TensorF y({A.M});
  for (int64_t i = 0; i < A.M; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < A.N; ++j) acc += double(A.data.at(i * A.N + j)) * double(x.at(j));
    y.at(i) = static_cast<float>(acc);
  }
  return y;
}

TensorF ref_adjoint(const SamplingMatrix& A, const TensorF& y) {
  TensorF x({A.N}, 0.0f);
  for (int64_t i = 0; i < A.M; ++i)
    for (int64_t j = 0; j < A.N; ++j) x.at(j) += A.data.at(i * A.N + j) * y.at(i);
  return x;
}

}  // namespace

TEST_CASE("gaussian orthonormal generation") {
  SUBCASE("1x1 is a unit scalar") {
    auto A = gen_gaussian_orthonormal(1, 1, 3);
    CHECK(std::abs(std::abs(A.data.at(0)) - 1.0f) < 1e-6f);
  }
  SUBCASE("rows are orthonormal") {
    auto A = gen_gaussian_orthonormal(4, 8, 0);
    CHECK(orthonormality_defect(A) < 1e-6);
    for (auto dims : std::vector<std::pair<int64_t, int64_t>>{{1, 1}, {4, 8}, {16, 32}, {32, 32}}) {
      auto B = gen_gaussian_orthonormal(dims.first, dims.second, 11);
      CHECK(orthonormality_defect(B) < 1e-5);
    }
  }
  SUBCASE("gamma is M/N") {
    auto A = gen_gaussian_orthonormal(16, 32, 0);
    CHECK(A.gamma == doctest::Approx(0.5));
    CHECK(A.kind == MatrixKind::gaussian_orthonormal);
  }
  SUBCASE("deterministic per seed") {
    auto A = gen_gaussian_orthonormal(6, 12, 5);
    auto B = gen_gaussian_orthonormal(6, 12, 5);
    auto C = gen_gaussian_orthonormal(6, 12, 6);
    CHECK(A.data.data == B.data.data);
    CHECK(max_abs_diff(A.data, C.data) > 1e-3f);
  }
  SUBCASE("M > N rejected") {
    CHECK_THROWS_AS(gen_gaussian_orthonormal(9, 8, 0), std::invalid_argument);
    CHECK_THROWS_AS(gen_bernoulli(9, 8, 0), std::invalid_argument);
  }
}

TEST_CASE("bernoulli generation") {
  auto A = gen_bernoulli(2, 4, 7);
  for (float v : A.data.data) CHECK((v == 1.0f || v == -1.0f));
  CHECK(A.kind == MatrixKind::bernoulli_pm1);

  auto B = gen_bernoulli(100, 1000, 1);
  double mean = 0.0;
  for (float v : B.data.data) mean += v;
  mean /= double(B.data.numel());
  CHECK(std::abs(mean) < 0.05);

  auto C = gen_bernoulli(5000, 16384, 2);
  CHECK(C.gamma == doctest::Approx(5000.0 / 16384.0));
  CHECK(std::abs(C.gamma - 0.305) < 1e-3);

  auto D1 = gen_bernoulli(3, 5, 9);
  auto D2 = gen_bernoulli(3, 5, 9);
  CHECK(D1.data.data == D2.data.data);
}

TEST_CASE("apply and adjoint") {
  Rng rng = make_rng(1, 99);

  SUBCASE("identity matrix passes x through") {
    SamplingMatrix I;
    I.M = I.N = 4;
    I.gamma = 1.0;
    I.kind = MatrixKind::gaussian_orthonormal;
    I.data = TensorF({4, 4}, 0.0f);
    for (int64_t i = 0; i < 4; ++i) I.data.at(i * 4 + i) = 1.0f;
    TensorF x = randn_tensor({4}, rng);
    TensorF y = apply(I, x);
    CHECK(y.data == x.data);
  }
  SUBCASE("zero in, zero out") {
    auto A = gen_gaussian_orthonormal(3, 6, 1);
    TensorF z({6}, 0.0f);
    for (float v : apply(A, z).data) CHECK(v == 0.0f);
    TensorF zy({3}, 0.0f);
    for (float v : adjoint(A, zy).data) CHECK(v == 0.0f);
  }
  SUBCASE("matches reference matvec") {
    auto A = gen_bernoulli(5, 9, 4);
    TensorF x = randn_tensor({9}, rng);
    CHECK(max_abs_diff(apply(A, x), ref_apply(A, x)) < 1e-5f);
    TensorF y = randn_tensor({5}, rng);
    CHECK(max_abs_diff(adjoint(A, y), ref_adjoint(A, y)) < 1e-5f);
  }
  SUBCASE("orthonormal rows give A A^T = I identities") {
    auto A = gen_gaussian_orthonormal(8, 16, 2);
    TensorF x = randn_tensor({16}, rng);
    TensorF Ax = apply(A, x);
    TensorF AAtAx = apply(A, adjoint(A, Ax));
    CHECK(max_abs_diff(AAtAx, Ax) < 1e-5f);

    TensorF y = randn_tensor({8}, rng);
    CHECK(max_abs_diff(apply(A, adjoint(A, y)), y) < 1e-5f);
  }
  SUBCASE("adjoint is the transpose in the inner product") {
    auto A = gen_gaussian_orthonormal(7, 15, 3);
    TensorF x = randn_tensor({15}, rng);
    TensorF y = randn_tensor({7}, rng);
    double lhs = 0.0, rhs = 0.0;
    TensorF Ax = apply(A, x), Aty = adjoint(A, y);
    for (int64_t i = 0; i < 7; ++i) lhs += double(Ax.at(i)) * double(y.at(i));
    for (int64_t j = 0; j < 15; ++j) rhs += double(x.at(j)) * double(Aty.at(j));
    CHECK(std::abs(lhs - rhs) < 1e-6 * std::max(1.0, std::abs(lhs)));
  }
  SUBCASE("projector idempotence") {
    auto A = gen_gaussian_orthonormal(6, 20, 8);
    TensorF x = randn_tensor({20}, rng);
    TensorF Px = adjoint(A, apply(A, x));
    TensorF PPx = adjoint(A, apply(A, Px));
    CHECK(max_abs_diff(PPx, Px) < 1e-4f);
  }
  SUBCASE("dimension mismatch rejected") {
    auto A = gen_gaussian_orthonormal(3, 6, 1);
    TensorF bad({5});
    CHECK_THROWS_AS(apply(A, bad), std::invalid_argument);
    CHECK_THROWS_AS(adjoint(A, bad), std::invalid_argument);
  }
}

TEST_CASE("pinv initialization") {
  Rng rng = make_rng(2, 99);
  SUBCASE("orthonormal: transpose recovers row-space signals") {
    auto A = gen_gaussian_orthonormal(8, 16, 5);
    TensorF z = randn_tensor({8}, rng);
    TensorF x = adjoint(A, z);  // lies in the row space
    TensorF rec = pinv_init(A, apply(A, x));
    CHECK(max_abs_diff(rec, x) < 1e-5f);
  }
  SUBCASE("bernoulli: transpose scaled by 1/N") {
    auto A = gen_bernoulli(4, 10, 6);
    TensorF y = randn_tensor({4}, rng);
    TensorF got = pinv_init(A, y);
    TensorF want = ref_adjoint(A, y);
    for (auto& v : want.data) v /= 10.0f;
    CHECK(max_abs_diff(got, want) < 1e-6f);
  }
}

TEST_CASE("measurement synthesis") {
  Rng rng = make_rng(3, 99);
  auto A = gen_gaussian_orthonormal(6, 12, 7);
  TensorF x = randn_tensor({12}, rng);

  SUBCASE("noise-free case is exact") {
    auto m = synthesize_measurement(A, x, 0.0, rng);
    CHECK(m.values.data == apply(A, x).data);
    CHECK(m.sigma == 0.0);
    CHECK(m.matrix_id == matrix_id(A));
  }
  SUBCASE("negative sigma rejected") {
    CHECK_THROWS_AS(synthesize_measurement(A, x, -1.0, rng), std::invalid_argument);
  }
  SUBCASE("noise moments") {
    const int64_t draws = 100000;
    TensorF ax = apply(A, x);
    std::vector<double> sum(6, 0.0), sumsq(6, 0.0);
    Rng nr = make_rng(4, 99);
    for (int64_t d = 0; d < draws; ++d) {
      auto m = synthesize_measurement(A, x, 10.0, nr);
      for (int64_t i = 0; i < 6; ++i) {
        double e = double(m.values.at(i)) - double(ax.at(i));
        sum[size_t(i)] += e;
        sumsq[size_t(i)] += e * e;
      }
    }
    for (int64_t i = 0; i < 6; ++i) {
      double mean = sum[size_t(i)] / draws;
      double var = sumsq[size_t(i)] / draws - mean * mean;
      CHECK(std::abs(mean) < 0.1);
      CHECK(var == doctest::Approx(100.0).epsilon(0.02));
    }
  }
}

TEST_CASE("masked operator") {
  Rng rng = make_rng(5, 99);
  auto A = gen_gaussian_orthonormal(10, 20, 8);

  SUBCASE("r=0 keeps A, r=1 zeroes it") {
    auto M0 = masked_operator(A, 0.0, rng);
    CHECK(M0.data.data == A.data.data);
    auto M1 = masked_operator(A, 1.0, rng);
    CHECK(max_abs(M1.data) == 0.0f);
    CHECK(M1.kind == MatrixKind::derived);
    CHECK(M1.gamma == A.gamma);
    CHECK_THROWS_AS(masked_operator(A, 1.5, rng), std::invalid_argument);
  }
  SUBCASE("zeroed-row count concentrates around r*M") {
    SamplingMatrix big;
    big.M = 5000;
    big.N = 4;
    big.gamma = 1.0;
    big.kind = MatrixKind::derived;
    big.data = TensorF({5000, 4}, 1.0f);
    auto masked = masked_operator(big, 0.015, rng);
    int64_t zeroed = 0;
    for (int64_t i = 0; i < masked.M; ++i) {
      bool all_zero = true;
      for (int64_t j = 0; j < masked.N && all_zero; ++j)
        all_zero = masked.data.at(i * masked.N + j) == 0.0f;
      zeroed += all_zero ? 1 : 0;
    }
    CHECK(zeroed >= 45);
    CHECK(zeroed <= 105);
  }
}

TEST_CASE("row subsets") {
  auto A = gen_gaussian_orthonormal(6, 12, 9);
  auto S = row_subset(A, {1, 4, 5});
  CHECK(S.M == 3);
  CHECK(S.N == 12);
  CHECK(S.gamma == doctest::Approx(3.0 / 12.0));
  CHECK(S.kind == A.kind);
  const std::vector<int64_t> idx{1, 4, 5};
  for (int64_t k = 0; k < 3; ++k)
    for (int64_t j = 0; j < 12; ++j) CHECK(S.data.at(k * 12 + j) == A.data.at(idx[size_t(k)] * 12 + j));
  // subsets of orthonormal rows stay orthonormal
  CHECK(orthonormality_defect(S) < 1e-5);
  CHECK_THROWS_AS(row_subset(A, {0, 6}), std::invalid_argument);
}

TEST_CASE("block operators") {
  Rng rng = make_rng(6, 99);

  SUBCASE("single block equals the dense operator") {
    BlockOperator op;
    op.B = 33;
    op.matrix = gen_gaussian_orthonormal(40, 33 * 33, 10);
    TensorF img = randn_tensor({33, 33}, rng);
    auto bm = block_apply(op, img, 0.0, rng);
    CHECK(bm.values.shape == std::vector<int64_t>{1, 40});
    TensorF flat({33 * 33});
    std::copy(img.data.begin(), img.data.end(), flat.data.begin());
    CHECK(max_abs_diff(bm.values, apply(op.matrix, flat)) == 0.0f);
  }
  SUBCASE("two stacked blocks match per-block dense application") {
    BlockOperator op;
    op.B = 4;
    op.matrix = gen_gaussian_orthonormal(5, 16, 11);
    TensorF img = randn_tensor({8, 4}, rng);
    auto bm = block_apply(op, img, 0.0, rng);
    CHECK(bm.bh == 2);
    CHECK(bm.bw == 1);
    for (int64_t blk = 0; blk < 2; ++blk) {
      TensorF part({16});
      for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j) part.at(i * 4 + j) = img.at((blk * 4 + i) * 4 + j);
      TensorF want = apply(op.matrix, part);
      for (int64_t m = 0; m < 5; ++m) CHECK(bm.values.at(blk * 5 + m) == doctest::Approx(want.at(m)));
    }
  }
  SUBCASE("padding arithmetic") {
    BlockOperator op;
    op.B = 33;
    op.matrix = gen_bernoulli(8, 33 * 33, 12);
    TensorF img({256, 256}, 0.25f);
    auto bm = block_apply(op, img, 0.0, rng);
    CHECK(bm.bh == 8);
    CHECK(bm.bw == 8);
    CHECK(bm.values.shape[0] == 64);
    // adjoint reassembles to the original dims
    TensorF back = block_adjoint(op, bm);
    CHECK(back.shape == std::vector<int64_t>{256, 256});
  }
  SUBCASE("zero image yields zero measurements") {
    BlockOperator op;
    op.B = 4;
    op.matrix = gen_gaussian_orthonormal(3, 16, 13);
    TensorF img({6, 6}, 0.0f);
    auto bm = block_apply(op, img, 0.0, rng);
    CHECK(max_abs(bm.values) == 0.0f);
  }
}

TEST_CASE("matrix and measurement files") {
  auto A = gen_gaussian_orthonormal(5, 10, 14);
  const char* path = "test_sensing_matrix.scsm";
  save_matrix(path, A);
  auto B = load_matrix(path);
  CHECK(B.data.data == A.data.data);
  CHECK(B.kind == A.kind);
  CHECK(B.M == A.M);
  CHECK(B.N == A.N);
  CHECK(B.gamma == A.gamma);

  // corrupt the magic
  {
    FILE* f = fopen(path, "r+b");
    REQUIRE(f != nullptr);
    fputc('X', f);
    fclose(f);
  }
  CHECK_THROWS_AS(load_matrix(path), FormatError);

  Rng rng = make_rng(7, 99);
  std::vector<TensorF> vals;
  for (int k = 0; k < 3; ++k) vals.push_back(randn_tensor({5}, rng));
  const char* mpath = "test_sensing_meas.scsy";
  save_measurements(mpath, matrix_id(A), 5, 0.5, vals);
  auto ms = load_measurements(mpath);
  CHECK(ms.M == 5);
  CHECK(ms.sigma == 0.5);
  CHECK(ms.matrix_id == matrix_id(A));
  REQUIRE(ms.values.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(ms.values[size_t(k)].data == vals[size_t(k)].data);

  std::remove(path);
  std::remove(mpath);
}

TEST_CASE("batched operators") {
  Rng rng = make_rng(8, 99);
  auto A = gen_gaussian_orthonormal(6, 12, 15);

  SUBCASE("dense batch equals per-sample matvec") {
    auto op = DenseBOp<float>::from(A);
    CHECK(op->n() == 12);
    CHECK(op->m_max() == 6);
    CHECK(op->m_of(2) == 6);
    CHECK(op->gamma_of(0) == doctest::Approx(0.5));
    CHECK(op->init_scale() == 1.0);

    TensorF X = randn_tensor({3, 12}, rng);
    TensorF Y({3, 6});
    op->apply(X.ptr(), 3, Y.ptr());
    for (int64_t b = 0; b < 3; ++b) {
      TensorF xb({12});
      std::copy_n(X.ptr() + b * 12, 12, xb.ptr());
      TensorF want = ref_apply(A, xb);
      for (int64_t i = 0; i < 6; ++i) CHECK(Y.at(b * 6 + i) == doctest::Approx(want.at(i)).epsilon(1e-5));
    }
    TensorF Yr = randn_tensor({3, 6}, rng);
    TensorF Xr({3, 12});
    op->adjoint(Yr.ptr(), 3, Xr.ptr());
    for (int64_t b = 0; b < 3; ++b) {
      TensorF yb({6});
      std::copy_n(Yr.ptr() + b * 6, 6, yb.ptr());
      TensorF want = ref_adjoint(A, yb);
      for (int64_t j = 0; j < 12; ++j) CHECK(Xr.at(b * 12 + j) == doctest::Approx(want.at(j)).epsilon(1e-5));
    }
  }
  SUBCASE("bernoulli dense op gets the 1/N init scale") {
    auto Bm = gen_bernoulli(4, 10, 16);
    auto op = DenseBOp<float>::from(Bm);
    CHECK(op->init_scale() == doctest::Approx(0.1));
  }
  SUBCASE("row-subset batch matches dense row subsets, padding stays zero") {
    std::vector<std::vector<int64_t>> rows{{0, 2, 4}, {1}, {3, 5}};
    auto base = std::make_shared<TensorF>(A.data);
    RowSubsetBOp<float> op(base, A.M, A.N, rows);
    CHECK(op.m_max() == 3);
    CHECK(op.m_of(1) == 1);
    CHECK(op.gamma_of(0) == doctest::Approx(0.25));

    TensorF X = randn_tensor({3, 12}, rng);
    TensorF Y({3, 3}, -1.0f);
    op.apply(X.ptr(), 3, Y.ptr());
    for (int64_t b = 0; b < 3; ++b) {
      auto S = row_subset(A, rows[size_t(b)]);
      TensorF xb({12});
      std::copy_n(X.ptr() + b * 12, 12, xb.ptr());
      TensorF want = ref_apply(S, xb);
      for (int64_t i = 0; i < op.m_of(b); ++i)
        CHECK(Y.at(b * 3 + i) == doctest::Approx(want.at(i)).epsilon(1e-5));
      for (int64_t i = op.m_of(b); i < 3; ++i) CHECK(Y.at(b * 3 + i) == 0.0f);
    }
    // adjoint consistency through the inner product, per sample
    TensorF Yr = randn_tensor({3, 3}, rng);
    for (int64_t b = 0; b < 3; ++b)
      for (int64_t i = op.m_of(b); i < 3; ++i) Yr.at(b * 3 + i) = 0.0f;
    TensorF Xr({3, 12});
    op.adjoint(Yr.ptr(), 3, Xr.ptr());
    TensorF Yx({3, 3});
    op.apply(X.ptr(), 3, Yx.ptr());
    for (int64_t b = 0; b < 3; ++b) {
      double lhs = 0.0, rhs = 0.0;
      for (int64_t i = 0; i < 3; ++i) lhs += double(Yx.at(b * 3 + i)) * double(Yr.at(b * 3 + i));
      for (int64_t j = 0; j < 12; ++j) rhs += double(X.at(b * 12 + j)) * double(Xr.at(b * 12 + j));
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
    }
  }
  SUBCASE("per-sample matrices act independently") {
    std::vector<TensorF> mats;
    mats.push_back(gen_gaussian_orthonormal(2, 8, 17).data);
    mats.push_back(gen_gaussian_orthonormal(5, 8, 18).data);
    std::vector<SamplingMatrix> refs;
    for (int k = 0; k < 2; ++k) {
      SamplingMatrix R;
      R.data = mats[size_t(k)];
      R.M = mats[size_t(k)].shape[0];
      R.N = 8;
      R.gamma = double(R.M) / 8.0;
      refs.push_back(R);
    }
    PerSampleBOp<float> op(std::move(mats), 8);
    CHECK(op.m_max() == 5);
    CHECK(op.m_of(0) == 2);
    TensorF X = randn_tensor({2, 8}, rng);
    TensorF Y({2, 5}, -1.0f);
    op.apply(X.ptr(), 2, Y.ptr());
    for (int64_t b = 0; b < 2; ++b) {
      TensorF xb({8});
      std::copy_n(X.ptr() + b * 8, 8, xb.ptr());
      TensorF want = ref_apply(refs[size_t(b)], xb);
      for (int64_t i = 0; i < op.m_of(b); ++i)
        CHECK(Y.at(b * 5 + i) == doctest::Approx(want.at(i)).epsilon(1e-5));
      for (int64_t i = op.m_of(b); i < 5; ++i) CHECK(Y.at(b * 5 + i) == 0.0f);
    }
  }
  SUBCASE("block batch equals block_apply") {
    BlockOperator bop;
    bop.B = 4;
    bop.matrix = gen_gaussian_orthonormal(5, 16, 19);
    auto shared = std::make_shared<TensorF>(bop.matrix.data);
    BlockBOp<float> op(shared, 5, 4, 6, 6, bop.matrix.gamma);
    CHECK(op.blocks_h() == 2);
    CHECK(op.blocks_w() == 2);
    CHECK(op.n() == 36);
    CHECK(op.m_max() == 20);

    TensorF img = randn_tensor({6, 6}, rng);
    Rng r0 = make_rng(1, 1);
    auto bm = block_apply(bop, img, 0.0, r0);
    TensorF Y({1, 20});
    op.apply(img.ptr(), 1, Y.ptr());
    CHECK(max_abs_diff(Y, bm.values) < 1e-5f);

    // adjoint agrees with block_adjoint up to the shared transpose scale
    TensorF X({1, 36});
    op.adjoint(Y.ptr(), 1, X.ptr());
    TensorF back = block_adjoint(bop, bm);
    CHECK(max_abs_diff(X, back) < 1e-5f);
  }
}
