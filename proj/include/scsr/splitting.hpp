#pragma once

#include <vector>

#include "scsr/rng.hpp"
#include "scsr/sensing.hpp"
#include "scsr/tensor.hpp"

namespace scsr {

// A random complementary division of one measurement task (y, A, gamma) into
// two sub-tasks. Index sets are sorted, disjoint, and cover {0..M-1}.
template <typename T>
struct MeasurementSplitT {
  std::vector<int64_t> idx1, idx2;
  Tensor<T> y1, y2;
  SamplingMatrixT<T> A1, A2;
  double gamma1 = 0.0, gamma2 = 0.0;
};
using MeasurementSplit = MeasurementSplitT<float>;

// M1 ~ Uniform{1..M-1}, idx1 a uniform random M1-subset.
template <typename T>
MeasurementSplitT<T> split(const Tensor<T>& y, const SamplingMatrixT<T>& A, Rng& rng);

template <typename T>
std::pair<Tensor<T>, SamplingMatrixT<T>> merge(const MeasurementSplitT<T>& s);

// Index-only split plan for batched training: one independent draw per sample.
struct SplitPlan {
  std::vector<std::vector<int64_t>> idx1, idx2;
};
SplitPlan draw_splits(int64_t M, int64_t batch, Rng& rng);

// Gather y[b, idx[b][k]] into a zero-padded [batch, max_k] tensor.
template <typename T>
Tensor<T> gather_measurements(const Tensor<T>& y, const std::vector<std::vector<int64_t>>& idx);

extern template struct MeasurementSplitT<float>;
extern template struct MeasurementSplitT<double>;

}  // namespace scsr
