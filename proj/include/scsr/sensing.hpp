#pragma once

#include <memory>
#include <string>
#include <vector>

#include "scsr/io_binary.hpp"
#include "scsr/rng.hpp"
#include "scsr/tensor.hpp"

namespace scsr {

enum class MatrixKind : uint8_t {
  gaussian_orthonormal = 0,
  bernoulli_pm1 = 1,
  derived = 2,  // masked / transformed / row-subset products
};

template <typename T>
struct SamplingMatrixT {
  Tensor<T> data;  // [M, N] row-major
  MatrixKind kind = MatrixKind::derived;
  int64_t M = 0;
  int64_t N = 0;
  double gamma = 0.0;
};

using SamplingMatrix = SamplingMatrixT<float>;
using SamplingMatrixD = SamplingMatrixT<double>;

template <typename T>
struct MeasurementT {
  Tensor<T> values;  // [M]
  Hash16 matrix_id{};
  double sigma = 0.0;
};
using Measurement = MeasurementT<float>;

// Block-based sensing: one shared M x B^2 matrix applied to non-overlapping
// B x B blocks of a zero-padded image, outputs cropped back to H x W.
template <typename T>
struct BlockOperatorT {
  SamplingMatrixT<T> matrix;  // N = B*B
  int64_t B = 0;
};
using BlockOperator = BlockOperatorT<float>;

template <typename T>
struct BlockMeasurementT {
  Tensor<T> values;  // [nblocks, M], blocks in row-major (bi, bj) order
  int64_t H = 0, W = 0, B = 0;
  int64_t bh = 0, bw = 0;  // block grid dims
  Hash16 matrix_id{};
  double sigma = 0.0;
};
using BlockMeasurement = BlockMeasurementT<float>;

SamplingMatrixD gen_gaussian_orthonormal_d(int64_t M, int64_t N, uint64_t seed);
SamplingMatrixD gen_bernoulli_d(int64_t M, int64_t N, uint64_t seed);
SamplingMatrix gen_gaussian_orthonormal(int64_t M, int64_t N, uint64_t seed);
SamplingMatrix gen_bernoulli(int64_t M, int64_t N, uint64_t seed);

// Largest absolute entry of A A^T - I; the orthonormal-rows defect.
template <typename T>
double orthonormality_defect(const SamplingMatrixT<T>& A);

template <typename T>
Tensor<T> apply(const SamplingMatrixT<T>& A, const Tensor<T>& x);
template <typename T>
Tensor<T> adjoint(const SamplingMatrixT<T>& A, const Tensor<T>& y);
// A^dagger y used as the network's input estimate: transpose for
// orthonormal-row matrices, (1/N) A^T for plus/minus-one matrices.
template <typename T>
Tensor<T> pinv_init(const SamplingMatrixT<T>& A, const Tensor<T>& y);

template <typename T>
Hash16 matrix_id(const SamplingMatrixT<T>& A);

template <typename T>
MeasurementT<T> synthesize_measurement(const SamplingMatrixT<T>& A, const Tensor<T>& x,
                                       double sigma, Rng& rng);

template <typename T>
SamplingMatrixT<T> masked_operator(const SamplingMatrixT<T>& A, double r, Rng& rng);

// Rows of A restricted to idx (order preserved).
template <typename T>
SamplingMatrixT<T> row_subset(const SamplingMatrixT<T>& A, const std::vector<int64_t>& idx);

template <typename T>
BlockMeasurementT<T> block_apply(const BlockOperatorT<T>& op, const Tensor<T>& image,
                                 double sigma, Rng& rng);
// A^T y per block, reassembled and cropped to H x W.
template <typename T>
Tensor<T> block_adjoint(const BlockOperatorT<T>& op, const BlockMeasurementT<T>& meas);

void save_matrix(const std::string& path, const SamplingMatrix& A);
void save_matrix(const std::string& path, const SamplingMatrixD& A);
SamplingMatrix load_matrix(const std::string& path);
SamplingMatrixD load_matrix_d(const std::string& path);

void save_measurements(const std::string& path, const Hash16& matrix_id, int64_t M,
                       double sigma, const std::vector<TensorF>& values);
struct MeasurementSet {
  Hash16 matrix_id{};
  int64_t M = 0;
  double sigma = 0.0;
  std::vector<TensorF> values;
};
MeasurementSet load_measurements(const std::string& path);

// ---------------------------------------------------------------------------
// Batched linear operators. Training touches measurements through this
// interface so that per-sample row subsets and per-sample fresh matrices run
// behind the same gradient code. X is [bsz, N] row-major, Y is [bsz, m_max]
// with rows past m_of(b) kept at zero.

template <typename T>
struct BatchedOp {
  virtual ~BatchedOp() = default;
  virtual int64_t n() const = 0;
  virtual int64_t m_max() const = 0;
  virtual int64_t m_of(int64_t b) const = 0;
  virtual double gamma_of(int64_t b) const = 0;
  virtual void apply(const T* X, int64_t bsz, T* Y) const = 0;
  virtual void adjoint(const T* Y, int64_t bsz, T* X) const = 0;
  // scale used by pinv-style init (1 for orthonormal, 1/N for bernoulli)
  virtual double init_scale() const { return 1.0; }
};

// One dense matrix shared by every sample in the batch.
template <typename T>
class DenseBOp : public BatchedOp<T> {
 public:
  DenseBOp(std::shared_ptr<const Tensor<T>> A, int64_t M, int64_t N, double gamma,
           double init_scale = 1.0)
      : A_(std::move(A)), M_(M), N_(N), gamma_(gamma), init_scale_(init_scale) {}
  static std::shared_ptr<DenseBOp<T>> from(const SamplingMatrixT<T>& A);
  int64_t n() const override { return N_; }
  int64_t m_max() const override { return M_; }
  int64_t m_of(int64_t) const override { return M_; }
  double gamma_of(int64_t) const override { return gamma_; }
  void apply(const T* X, int64_t bsz, T* Y) const override;
  void adjoint(const T* Y, int64_t bsz, T* X) const override;
  double init_scale() const override { return init_scale_; }

 private:
  std::shared_ptr<const Tensor<T>> A_;
  int64_t M_, N_;
  double gamma_;
  double init_scale_;
};

// Per-sample row subsets of one shared base matrix. The sub-matrix products
// are computed as full-matrix GEMMs plus index gather/scatter, which is exact.
template <typename T>
class RowSubsetBOp : public BatchedOp<T> {
 public:
  RowSubsetBOp(std::shared_ptr<const Tensor<T>> base, int64_t Mb, int64_t N,
               std::vector<std::vector<int64_t>> rows, double init_scale = 1.0);
  int64_t n() const override { return N_; }
  int64_t m_max() const override { return m_max_; }
  int64_t m_of(int64_t b) const override { return static_cast<int64_t>(rows_[b].size()); }
  double gamma_of(int64_t b) const override { return static_cast<double>(rows_[b].size()) / static_cast<double>(N_); }
  void apply(const T* X, int64_t bsz, T* Y) const override;
  void adjoint(const T* Y, int64_t bsz, T* X) const override;
  double init_scale() const override { return init_scale_; }
  const std::vector<std::vector<int64_t>>& rows() const { return rows_; }

 private:
  std::shared_ptr<const Tensor<T>> base_;  // [Mb, N]
  int64_t Mb_, N_, m_max_;
  std::vector<std::vector<int64_t>> rows_;
  double init_scale_ = 1.0;
};

// Fully independent per-sample matrices (ragged M).
template <typename T>
class PerSampleBOp : public BatchedOp<T> {
 public:
  explicit PerSampleBOp(std::vector<Tensor<T>> mats, int64_t N, double init_scale = 1.0);
  int64_t n() const override { return N_; }
  int64_t m_max() const override { return m_max_; }
  int64_t m_of(int64_t b) const override { return mats_[b].shape[0]; }
  double gamma_of(int64_t b) const override { return static_cast<double>(mats_[b].shape[0]) / static_cast<double>(N_); }
  void apply(const T* X, int64_t bsz, T* Y) const override;
  void adjoint(const T* Y, int64_t bsz, T* X) const override;
  double init_scale() const override { return init_scale_; }

 private:
  std::vector<Tensor<T>> mats_;
  int64_t N_, m_max_;
  double init_scale_ = 1.0;
};

// Shared M x B^2 matrix applied per block of the padded H x W grid; the
// flattened measurement vector concatenates blocks in (bi, bj) order.
template <typename T>
class BlockBOp : public BatchedOp<T> {
 public:
  BlockBOp(std::shared_ptr<const Tensor<T>> A, int64_t M, int64_t B, int64_t H, int64_t W,
           double gamma, double init_scale = 1.0);
  int64_t n() const override { return H_ * W_; }
  int64_t m_max() const override { return M_ * bh_ * bw_; }
  int64_t m_of(int64_t) const override { return m_max(); }
  double gamma_of(int64_t) const override { return gamma_; }
  void apply(const T* X, int64_t bsz, T* Y) const override;
  void adjoint(const T* Y, int64_t bsz, T* X) const override;
  double init_scale() const override { return init_scale_; }
  int64_t blocks_h() const { return bh_; }
  int64_t blocks_w() const { return bw_; }

 private:
  std::shared_ptr<const Tensor<T>> A_;  // [M, B*B]
  int64_t M_, B_, H_, W_, bh_, bw_;
  double gamma_, init_scale_;
};

extern template struct SamplingMatrixT<float>;
extern template struct SamplingMatrixT<double>;

}  // namespace scsr
