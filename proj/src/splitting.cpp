#include "scsr/splitting.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace scsr {

namespace {

struct SplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::pair<std::vector<int64_t>, std::vector<int64_t>> draw_index_split(int64_t M, Rng& rng) {
  // Uniform subset of size M1: Fisher-Yates prefix of a shuffled index list.
  int64_t M1 = rng.uniform_int(1, M - 1);
  std::vector<int64_t> perm(static_cast<size_t>(M));
  std::iota(perm.begin(), perm.end(), 0);
  for (int64_t i = 0; i < M1; ++i) {
    int64_t j = rng.uniform_int(i, M - 1);
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  std::vector<int64_t> idx1(perm.begin(), perm.begin() + M1);
  std::vector<int64_t> idx2(perm.begin() + M1, perm.end());
  std::sort(idx1.begin(), idx1.end());
  std::sort(idx2.begin(), idx2.end());
  return {std::move(idx1), std::move(idx2)};
}

}  // namespace

template <typename T>
MeasurementSplitT<T> split(const Tensor<T>& y, const SamplingMatrixT<T>& A, Rng& rng) {
  if (A.M < 2) throw SplitError("cannot split a task with fewer than 2 measurements");
  if (y.numel() != A.M) throw std::invalid_argument("split: measurement length != M");
  MeasurementSplitT<T> s;
  auto [i1, i2] = draw_index_split(A.M, rng);
  s.idx1 = std::move(i1);
  s.idx2 = std::move(i2);
  s.y1 = Tensor<T>({static_cast<int64_t>(s.idx1.size())});
  s.y2 = Tensor<T>({static_cast<int64_t>(s.idx2.size())});
  for (size_t k = 0; k < s.idx1.size(); ++k) s.y1.at(static_cast<int64_t>(k)) = y.at(s.idx1[k]);
  for (size_t k = 0; k < s.idx2.size(); ++k) s.y2.at(static_cast<int64_t>(k)) = y.at(s.idx2[k]);
  s.A1 = row_subset(A, s.idx1);
  s.A2 = row_subset(A, s.idx2);
  s.gamma1 = s.A1.gamma;
  s.gamma2 = s.A2.gamma;
  return s;
}

template <typename T>
std::pair<Tensor<T>, SamplingMatrixT<T>> merge(const MeasurementSplitT<T>& s) {
  int64_t M = static_cast<int64_t>(s.idx1.size() + s.idx2.size());
  std::vector<char> seen(static_cast<size_t>(M), 0);
  for (int64_t i : s.idx1) {
    if (i < 0 || i >= M || seen[static_cast<size_t>(i)]) throw SplitError("corrupt split: bad idx1");
    seen[static_cast<size_t>(i)] = 1;
  }
  for (int64_t i : s.idx2) {
    if (i < 0 || i >= M || seen[static_cast<size_t>(i)]) throw SplitError("corrupt split: bad idx2");
    seen[static_cast<size_t>(i)] = 1;
  }
  int64_t N = s.A1.N;
  Tensor<T> y({M});
  SamplingMatrixT<T> A;
  A.data = Tensor<T>({M, N});
  A.kind = s.A1.kind;
  A.M = M;
  A.N = N;
  A.gamma = static_cast<double>(M) / static_cast<double>(N);
  for (size_t k = 0; k < s.idx1.size(); ++k) {
    y.at(s.idx1[k]) = s.y1.at(static_cast<int64_t>(k));
    std::copy_n(s.A1.data.ptr() + static_cast<int64_t>(k) * N, N, A.data.ptr() + s.idx1[k] * N);
  }
  for (size_t k = 0; k < s.idx2.size(); ++k) {
    y.at(s.idx2[k]) = s.y2.at(static_cast<int64_t>(k));
    std::copy_n(s.A2.data.ptr() + static_cast<int64_t>(k) * N, N, A.data.ptr() + s.idx2[k] * N);
  }
  return {std::move(y), std::move(A)};
}

SplitPlan draw_splits(int64_t M, int64_t batch, Rng& rng) {
  if (M < 2) throw SplitError("cannot split a task with fewer than 2 measurements");
  SplitPlan plan;
  plan.idx1.reserve(static_cast<size_t>(batch));
  plan.idx2.reserve(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b) {
    auto [i1, i2] = draw_index_split(M, rng);
    plan.idx1.push_back(std::move(i1));
    plan.idx2.push_back(std::move(i2));
  }
  return plan;
}

template <typename T>
Tensor<T> gather_measurements(const Tensor<T>& y, const std::vector<std::vector<int64_t>>& idx) {
  int64_t batch = static_cast<int64_t>(idx.size());
  int64_t M = y.shape.back();
  int64_t mmax = 0;
  for (const auto& v : idx) mmax = std::max<int64_t>(mmax, static_cast<int64_t>(v.size()));
  Tensor<T> out({batch, mmax});
  for (int64_t b = 0; b < batch; ++b) {
    const T* yb = y.ptr() + b * M;
    T* ob = out.ptr() + b * mmax;
    const auto& v = idx[static_cast<size_t>(b)];
    for (size_t k = 0; k < v.size(); ++k) ob[k] = yb[v[k]];
  }
  return out;
}

template struct MeasurementSplitT<float>;
template struct MeasurementSplitT<double>;
template MeasurementSplitT<float> split(const Tensor<float>&, const SamplingMatrixT<float>&, Rng&);
template MeasurementSplitT<double> split(const Tensor<double>&, const SamplingMatrixT<double>&, Rng&);
template std::pair<Tensor<float>, SamplingMatrixT<float>> merge(const MeasurementSplitT<float>&);
template std::pair<Tensor<double>, SamplingMatrixT<double>> merge(const MeasurementSplitT<double>&);
template Tensor<float> gather_measurements(const Tensor<float>&, const std::vector<std::vector<int64_t>>&);
template Tensor<double> gather_measurements(const Tensor<double>&, const std::vector<std::vector<int64_t>>&);

}  // namespace scsr
