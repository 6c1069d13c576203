#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace scsr {

// Dense row-major contiguous tensor. Shapes are small (rank <= 3 in practice);
// all heavy math happens through Eigen maps over the flat buffer.

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), data(count(shape), T(0)) {}
  Tensor(std::vector<int64_t> s, T fill) : shape(std::move(s)), data(count(shape), fill) {}

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw std::invalid_argument("negative tensor dim");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  bool empty() const { return data.empty(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& at(int64_t i) const { return data[static_cast<size_t>(i)]; }

  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  // Map the flat buffer as a rows x cols row-major matrix.
  MatMap<T> mat(int64_t rows, int64_t cols) {
    if (rows * cols != numel()) throw std::invalid_argument("bad mat() view");
    return MatMap<T>(ptr(), rows, cols);
  }
  ConstMatMap<T> mat(int64_t rows, int64_t cols) const {
    if (rows * cols != numel()) throw std::invalid_argument("bad mat() view");
    return ConstMatMap<T>(ptr(), rows, cols);
  }
  VecMap<T> vec() { return VecMap<T>(ptr(), numel()); }
  ConstVecMap<T> vec() const { return ConstVecMap<T>(ptr(), numel()); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (int64_t i = 0; i < numel(); ++i) out.data[static_cast<size_t>(i)] = static_cast<U>(data[static_cast<size_t>(i)]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
inline bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

template <typename T>
inline T max_abs(const Tensor<T>& t) {
  T m = 0;
  for (T v : t.data) m = std::max(m, static_cast<T>(std::abs(v)));
  return m;
}

template <typename T>
inline T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.numel() != b.numel()) throw std::invalid_argument("max_abs_diff shape mismatch");
  T m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, static_cast<T>(std::abs(a.data[i] - b.data[i])));
  return m;
}

}  // namespace scsr
