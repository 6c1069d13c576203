#include "scsr/sensing.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace scsr {

namespace {

constexpr uint32_t kMatrixVersion = 1;
constexpr uint32_t kMeasurementVersion = 1;

template <typename T>
uint8_t dtype_code();
template <>
uint8_t dtype_code<float>() { return 0; }
template <>
uint8_t dtype_code<double>() { return 1; }

void check_dims(int64_t M, int64_t N) {
  if (M < 1 || N < 1 || M > N) throw std::invalid_argument("invalid matrix dims: need 1 <= M <= N");
}

template <typename T>
void check_orthonormal(const SamplingMatrixT<T>& A) {
  if (A.kind != MatrixKind::gaussian_orthonormal) return;
  if (orthonormality_defect(A) >= 1e-5)
    throw std::logic_error("orthonormal sampling matrix failed its row-orthonormality check");
}

}  // namespace

SamplingMatrixD gen_gaussian_orthonormal_d(int64_t M, int64_t N, uint64_t seed) {
  check_dims(M, N);
  Rng rng = make_rng(seed, streams::matrix_gen);
  Eigen::MatrixXd G(N, M);  // transpose of the draw; QR gives orthonormal columns
  for (int64_t j = 0; j < M; ++j)
    for (int64_t i = 0; i < N; ++i) G(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(N, M);
  SamplingMatrixD A;
  A.data = TensorD({M, N});
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) A.data.at(i * N + j) = Q(j, i);
  A.kind = MatrixKind::gaussian_orthonormal;
  A.M = M;
  A.N = N;
  A.gamma = static_cast<double>(M) / static_cast<double>(N);
  check_orthonormal(A);
  return A;
}

SamplingMatrixD gen_bernoulli_d(int64_t M, int64_t N, uint64_t seed) {
  check_dims(M, N);
  Rng rng = make_rng(seed, streams::matrix_gen);
  SamplingMatrixD A;
  A.data = TensorD({M, N});
  for (int64_t i = 0; i < M * N; ++i) A.data.at(i) = rng.bernoulli(0.5) ? 1.0 : -1.0;
  A.kind = MatrixKind::bernoulli_pm1;
  A.M = M;
  A.N = N;
  A.gamma = static_cast<double>(M) / static_cast<double>(N);
  return A;
}

SamplingMatrix gen_gaussian_orthonormal(int64_t M, int64_t N, uint64_t seed) {
  SamplingMatrixD Ad = gen_gaussian_orthonormal_d(M, N, seed);
  SamplingMatrix A;
  A.data = Ad.data.cast<float>();
  A.kind = Ad.kind;
  A.M = Ad.M;
  A.N = Ad.N;
  A.gamma = Ad.gamma;
  check_orthonormal(A);
  return A;
}

SamplingMatrix gen_bernoulli(int64_t M, int64_t N, uint64_t seed) {
  SamplingMatrixD Ad = gen_bernoulli_d(M, N, seed);
  SamplingMatrix A;
  A.data = Ad.data.cast<float>();
  A.kind = Ad.kind;
  A.M = Ad.M;
  A.N = Ad.N;
  A.gamma = Ad.gamma;
  return A;
}

template <typename T>
double orthonormality_defect(const SamplingMatrixT<T>& A) {
  auto Am = A.data.mat(A.M, A.N);
  RowMat<T> gram = Am * Am.transpose();
  double defect = 0.0;
  for (int64_t i = 0; i < A.M; ++i)
    for (int64_t j = 0; j < A.M; ++j) {
      double want = i == j ? 1.0 : 0.0;
      defect = std::max(defect, std::abs(static_cast<double>(gram(i, j)) - want));
    }
  return defect;
}

template <typename T>
Tensor<T> apply(const SamplingMatrixT<T>& A, const Tensor<T>& x) {
  if (x.numel() != A.N) throw std::invalid_argument("apply: signal length != N");
  Tensor<T> y({A.M});
  y.vec().noalias() = A.data.mat(A.M, A.N) * x.vec();
  return y;
}

template <typename T>
Tensor<T> adjoint(const SamplingMatrixT<T>& A, const Tensor<T>& y) {
  if (y.numel() != A.M) throw std::invalid_argument("adjoint: measurement length != M");
  Tensor<T> x({A.N});
  x.vec().noalias() = A.data.mat(A.M, A.N).transpose() * y.vec();
  return x;
}

template <typename T>
Tensor<T> pinv_init(const SamplingMatrixT<T>& A, const Tensor<T>& y) {
  Tensor<T> x = adjoint(A, y);
  if (A.kind == MatrixKind::bernoulli_pm1) {
    T s = static_cast<T>(1.0 / static_cast<double>(A.N));
    x.vec() *= s;
  }
  return x;
}

template <typename T>
Hash16 matrix_id(const SamplingMatrixT<T>& A) {
  struct {
    uint8_t kind, dtype;
    uint64_t M, N;
  } hdr{static_cast<uint8_t>(A.kind), dtype_code<T>(), static_cast<uint64_t>(A.M),
        static_cast<uint64_t>(A.N)};
  uint64_t h1 = fnv1a64(&hdr, sizeof hdr, 0xcbf29ce484222325ull);
  h1 = fnv1a64(A.data.ptr(), A.data.data.size() * sizeof(T), h1);
  uint64_t h2 = fnv1a64(&hdr, sizeof hdr, 0x84222325cbf29ce4ull);
  h2 = fnv1a64(A.data.ptr(), A.data.data.size() * sizeof(T), h2);
  Hash16 id;
  std::memcpy(id.data(), &h1, 8);
  std::memcpy(id.data() + 8, &h2, 8);
  return id;
}

template <typename T>
MeasurementT<T> synthesize_measurement(const SamplingMatrixT<T>& A, const Tensor<T>& x,
                                       double sigma, Rng& rng) {
  if (sigma < 0) throw std::invalid_argument("negative noise level");
  MeasurementT<T> m;
  m.values = apply(A, x);
  if (sigma > 0)
    for (int64_t i = 0; i < A.M; ++i) m.values.at(i) += static_cast<T>(sigma * rng.normal());
  m.matrix_id = matrix_id(A);
  m.sigma = sigma;
  return m;
}

template <typename T>
SamplingMatrixT<T> masked_operator(const SamplingMatrixT<T>& A, double r, Rng& rng) {
  if (r < 0 || r > 1) throw std::invalid_argument("mask probability outside [0,1]");
  SamplingMatrixT<T> out;
  out.data = A.data;
  out.kind = MatrixKind::derived;
  out.M = A.M;
  out.N = A.N;
  out.gamma = A.gamma;
  for (int64_t i = 0; i < A.M; ++i)
    if (rng.bernoulli(r))
      for (int64_t j = 0; j < A.N; ++j) out.data.at(i * A.N + j) = T(0);
  return out;
}

template <typename T>
SamplingMatrixT<T> row_subset(const SamplingMatrixT<T>& A, const std::vector<int64_t>& idx) {
  SamplingMatrixT<T> out;
  int64_t m = static_cast<int64_t>(idx.size());
  out.data = Tensor<T>({m, A.N});
  for (int64_t k = 0; k < m; ++k) {
    int64_t r = idx[static_cast<size_t>(k)];
    if (r < 0 || r >= A.M) throw std::invalid_argument("row_subset: index out of range");
    std::memcpy(out.data.ptr() + k * A.N, A.data.ptr() + r * A.N, sizeof(T) * static_cast<size_t>(A.N));
  }
  out.kind = A.kind;
  out.M = m;
  out.N = A.N;
  out.gamma = static_cast<double>(m) / static_cast<double>(A.N);
  return out;
}

template <typename T>
BlockMeasurementT<T> block_apply(const BlockOperatorT<T>& op, const Tensor<T>& image,
                                 double sigma, Rng& rng) {
  if (op.matrix.N != op.B * op.B) throw std::invalid_argument("block operator: N != B*B");
  if (image.shape.size() != 2) throw std::invalid_argument("block_apply expects an H x W image");
  int64_t H = image.shape[0], W = image.shape[1], B = op.B;
  BlockMeasurementT<T> out;
  out.H = H;
  out.W = W;
  out.B = B;
  out.bh = (H + B - 1) / B;
  out.bw = (W + B - 1) / B;
  out.matrix_id = matrix_id(op.matrix);
  out.sigma = sigma;
  int64_t nblocks = out.bh * out.bw;
  out.values = Tensor<T>({nblocks, op.matrix.M});
  Tensor<T> block({B * B});
  for (int64_t bi = 0; bi < out.bh; ++bi)
    for (int64_t bj = 0; bj < out.bw; ++bj) {
      block.zero();
      for (int64_t r = 0; r < B; ++r) {
        int64_t ir = bi * B + r;
        if (ir >= H) break;
        for (int64_t c = 0; c < B; ++c) {
          int64_t ic = bj * B + c;
          if (ic >= W) break;
          block.at(r * B + c) = image.at(ir * W + ic);
        }
      }
      MeasurementT<T> m = synthesize_measurement(op.matrix, block, sigma, rng);
      std::memcpy(out.values.ptr() + (bi * out.bw + bj) * op.matrix.M, m.values.ptr(),
                  sizeof(T) * static_cast<size_t>(op.matrix.M));
    }
  return out;
}

template <typename T>
Tensor<T> block_adjoint(const BlockOperatorT<T>& op, const BlockMeasurementT<T>& meas) {
  int64_t B = op.B;
  Tensor<T> image({meas.H, meas.W});
  Tensor<T> y({op.matrix.M});
  for (int64_t bi = 0; bi < meas.bh; ++bi)
    for (int64_t bj = 0; bj < meas.bw; ++bj) {
      std::memcpy(y.ptr(), meas.values.ptr() + (bi * meas.bw + bj) * op.matrix.M,
                  sizeof(T) * static_cast<size_t>(op.matrix.M));
      Tensor<T> block = pinv_init(op.matrix, y);
      for (int64_t r = 0; r < B; ++r) {
        int64_t ir = bi * B + r;
        if (ir >= meas.H) break;
        for (int64_t c = 0; c < B; ++c) {
          int64_t ic = bj * B + c;
          if (ic >= meas.W) break;
          image.at(ir * meas.W + ic) = block.at(r * B + c);
        }
      }
    }
  return image;
}

namespace {

template <typename T>
void save_matrix_impl(const std::string& path, const SamplingMatrixT<T>& A) {
  BinWriter w(path);
  w.magic("SCSM");
  w.u32(kMatrixVersion);
  w.u8(static_cast<uint8_t>(A.kind));
  w.u64(static_cast<uint64_t>(A.M));
  w.u64(static_cast<uint64_t>(A.N));
  w.u8(dtype_code<T>());
  w.values(A.data.data);
  w.close();
}

template <typename T>
SamplingMatrixT<T> load_matrix_impl(const std::string& path) {
  BinReader r(path);
  r.expect_magic("SCSM");
  uint32_t ver = r.u32();
  if (ver != kMatrixVersion) throw FormatError("unsupported matrix file version");
  auto kind = static_cast<MatrixKind>(r.u8());
  int64_t M = static_cast<int64_t>(r.u64());
  int64_t N = static_cast<int64_t>(r.u64());
  uint8_t dt = r.u8();
  if (dt != dtype_code<T>()) throw FormatError("matrix dtype mismatch");
  if (M < 1 || N < 1 || M > N) throw FormatError("corrupt matrix dims");
  SamplingMatrixT<T> A;
  A.data = Tensor<T>({M, N});
  r.values(A.data.data, static_cast<size_t>(M * N));
  A.kind = kind;
  A.M = M;
  A.N = N;
  A.gamma = static_cast<double>(M) / static_cast<double>(N);
  check_orthonormal(A);
  return A;
}

}  // namespace

void save_matrix(const std::string& path, const SamplingMatrix& A) { save_matrix_impl(path, A); }
void save_matrix(const std::string& path, const SamplingMatrixD& A) { save_matrix_impl(path, A); }
SamplingMatrix load_matrix(const std::string& path) { return load_matrix_impl<float>(path); }
SamplingMatrixD load_matrix_d(const std::string& path) { return load_matrix_impl<double>(path); }

void save_measurements(const std::string& path, const Hash16& matrix_id, int64_t M,
                       double sigma, const std::vector<TensorF>& values) {
  BinWriter w(path);
  w.magic("SCSY");
  w.u32(kMeasurementVersion);
  w.bytes(matrix_id.data(), matrix_id.size());
  w.u64(static_cast<uint64_t>(M));
  w.u64(values.size());
  w.f64(sigma);
  for (const auto& v : values) {
    if (v.numel() != M) throw std::invalid_argument("measurement length != M");
    for (int64_t i = 0; i < M; ++i) w.f64(static_cast<double>(v.at(i)));
  }
  w.close();
}

MeasurementSet load_measurements(const std::string& path) {
  BinReader r(path);
  r.expect_magic("SCSY");
  uint32_t ver = r.u32();
  if (ver != kMeasurementVersion) throw FormatError("unsupported measurement file version");
  MeasurementSet set;
  r.bytes(set.matrix_id.data(), set.matrix_id.size());
  set.M = static_cast<int64_t>(r.u64());
  uint64_t count = r.u64();
  set.sigma = r.f64();
  set.values.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    TensorF v({set.M});
    for (int64_t j = 0; j < set.M; ++j) v.at(j) = static_cast<float>(r.f64());
    set.values.push_back(std::move(v));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Batched operators

template <typename T>
std::shared_ptr<DenseBOp<T>> DenseBOp<T>::from(const SamplingMatrixT<T>& A) {
  auto buf = std::make_shared<Tensor<T>>(A.data);
  double scale = A.kind == MatrixKind::bernoulli_pm1 ? 1.0 / static_cast<double>(A.N) : 1.0;
  return std::make_shared<DenseBOp<T>>(buf, A.M, A.N, A.gamma, scale);
}

template <typename T>
void DenseBOp<T>::apply(const T* X, int64_t bsz, T* Y) const {
  ConstMatMap<T> Xm(X, bsz, N_);
  MatMap<T> Ym(Y, bsz, M_);
  Ym.noalias() = Xm * A_->mat(M_, N_).transpose();
}

template <typename T>
void DenseBOp<T>::adjoint(const T* Y, int64_t bsz, T* X) const {
  ConstMatMap<T> Ym(Y, bsz, M_);
  MatMap<T> Xm(X, bsz, N_);
  Xm.noalias() = Ym * A_->mat(M_, N_);
}

template <typename T>
RowSubsetBOp<T>::RowSubsetBOp(std::shared_ptr<const Tensor<T>> base, int64_t Mb, int64_t N,
                              std::vector<std::vector<int64_t>> rows, double init_scale)
    : base_(std::move(base)), Mb_(Mb), N_(N), rows_(std::move(rows)), init_scale_(init_scale) {
  m_max_ = 0;
  for (const auto& r : rows_) m_max_ = std::max<int64_t>(m_max_, static_cast<int64_t>(r.size()));
}

template <typename T>
void RowSubsetBOp<T>::apply(const T* X, int64_t bsz, T* Y) const {
  RowMat<T> R(bsz, Mb_);
  ConstMatMap<T> Xm(X, bsz, N_);
  R.noalias() = Xm * base_->mat(Mb_, N_).transpose();
  std::fill(Y, Y + bsz * m_max_, T(0));
  for (int64_t b = 0; b < bsz; ++b) {
    const auto& idx = rows_[static_cast<size_t>(b)];
    T* yb = Y + b * m_max_;
    for (size_t k = 0; k < idx.size(); ++k) yb[k] = R(b, idx[k]);
  }
}

template <typename T>
void RowSubsetBOp<T>::adjoint(const T* Y, int64_t bsz, T* X) const {
  RowMat<T> R = RowMat<T>::Zero(bsz, Mb_);
  for (int64_t b = 0; b < bsz; ++b) {
    const auto& idx = rows_[static_cast<size_t>(b)];
    const T* yb = Y + b * m_max_;
    for (size_t k = 0; k < idx.size(); ++k) R(b, idx[k]) = yb[k];
  }
  MatMap<T> Xm(X, bsz, N_);
  Xm.noalias() = R * base_->mat(Mb_, N_);
}

template <typename T>
PerSampleBOp<T>::PerSampleBOp(std::vector<Tensor<T>> mats, int64_t N, double init_scale)
    : mats_(std::move(mats)), N_(N), init_scale_(init_scale) {
  m_max_ = 0;
  for (const auto& m : mats_) {
    if (m.shape.size() != 2 || m.shape[1] != N_) throw std::invalid_argument("per-sample matrix shape");
    m_max_ = std::max(m_max_, m.shape[0]);
  }
}

template <typename T>
void PerSampleBOp<T>::apply(const T* X, int64_t bsz, T* Y) const {
  std::fill(Y, Y + bsz * m_max_, T(0));
  for (int64_t b = 0; b < bsz; ++b) {
    const Tensor<T>& A = mats_[static_cast<size_t>(b)];
    int64_t m = A.shape[0];
    VecMap<T>(Y + b * m_max_, m).noalias() = A.mat(m, N_) * ConstVecMap<T>(X + b * N_, N_);
  }
}

template <typename T>
void PerSampleBOp<T>::adjoint(const T* Y, int64_t bsz, T* X) const {
  for (int64_t b = 0; b < bsz; ++b) {
    const Tensor<T>& A = mats_[static_cast<size_t>(b)];
    int64_t m = A.shape[0];
    VecMap<T>(X + b * N_, N_).noalias() = A.mat(m, N_).transpose() * ConstVecMap<T>(Y + b * m_max_, m);
  }
}

template <typename T>
BlockBOp<T>::BlockBOp(std::shared_ptr<const Tensor<T>> A, int64_t M, int64_t B, int64_t H,
                      int64_t W, double gamma, double init_scale)
    : A_(std::move(A)), M_(M), B_(B), H_(H), W_(W), gamma_(gamma), init_scale_(init_scale) {
  bh_ = (H_ + B_ - 1) / B_;
  bw_ = (W_ + B_ - 1) / B_;
}

template <typename T>
void BlockBOp<T>::apply(const T* X, int64_t bsz, T* Y) const {
  int64_t bb = B_ * B_;
  RowMat<T> blocks(bh_ * bw_, bb);
  for (int64_t s = 0; s < bsz; ++s) {
    const T* img = X + s * H_ * W_;
    blocks.setZero();
    for (int64_t bi = 0; bi < bh_; ++bi)
      for (int64_t bj = 0; bj < bw_; ++bj) {
        int64_t rowi = bi * bw_ + bj;
        for (int64_t r = 0; r < B_; ++r) {
          int64_t ir = bi * B_ + r;
          if (ir >= H_) break;
          int64_t c_lim = std::min(B_, W_ - bj * B_);
          for (int64_t c = 0; c < c_lim; ++c) blocks(rowi, r * B_ + c) = img[ir * W_ + bj * B_ + c];
        }
      }
    MatMap<T> Ym(Y + s * m_max(), bh_ * bw_, M_);
    Ym.noalias() = blocks * A_->mat(M_, bb).transpose();
  }
}

template <typename T>
void BlockBOp<T>::adjoint(const T* Y, int64_t bsz, T* X) const {
  int64_t bb = B_ * B_;
  RowMat<T> blocks(bh_ * bw_, bb);
  for (int64_t s = 0; s < bsz; ++s) {
    ConstMatMap<T> Ym(Y + s * m_max(), bh_ * bw_, M_);
    blocks.noalias() = Ym * A_->mat(M_, bb);
    T* img = X + s * H_ * W_;
    std::fill(img, img + H_ * W_, T(0));
    for (int64_t bi = 0; bi < bh_; ++bi)
      for (int64_t bj = 0; bj < bw_; ++bj) {
        int64_t rowi = bi * bw_ + bj;
        for (int64_t r = 0; r < B_; ++r) {
          int64_t ir = bi * B_ + r;
          if (ir >= H_) break;
          int64_t c_lim = std::min(B_, W_ - bj * B_);
          for (int64_t c = 0; c < c_lim; ++c) img[ir * W_ + bj * B_ + c] = blocks(rowi, r * B_ + c);
        }
      }
  }
}

template struct SamplingMatrixT<float>;
template struct SamplingMatrixT<double>;

template double orthonormality_defect(const SamplingMatrixT<float>&);
template double orthonormality_defect(const SamplingMatrixT<double>&);
template Tensor<float> apply(const SamplingMatrixT<float>&, const Tensor<float>&);
template Tensor<double> apply(const SamplingMatrixT<double>&, const Tensor<double>&);
template Tensor<float> adjoint(const SamplingMatrixT<float>&, const Tensor<float>&);
template Tensor<double> adjoint(const SamplingMatrixT<double>&, const Tensor<double>&);
template Tensor<float> pinv_init(const SamplingMatrixT<float>&, const Tensor<float>&);
template Tensor<double> pinv_init(const SamplingMatrixT<double>&, const Tensor<double>&);
template Hash16 matrix_id(const SamplingMatrixT<float>&);
template Hash16 matrix_id(const SamplingMatrixT<double>&);
template MeasurementT<float> synthesize_measurement(const SamplingMatrixT<float>&, const Tensor<float>&, double, Rng&);
template MeasurementT<double> synthesize_measurement(const SamplingMatrixT<double>&, const Tensor<double>&, double, Rng&);
template SamplingMatrixT<float> masked_operator(const SamplingMatrixT<float>&, double, Rng&);
template SamplingMatrixT<double> masked_operator(const SamplingMatrixT<double>&, double, Rng&);
template SamplingMatrixT<float> row_subset(const SamplingMatrixT<float>&, const std::vector<int64_t>&);
template SamplingMatrixT<double> row_subset(const SamplingMatrixT<double>&, const std::vector<int64_t>&);
template BlockMeasurementT<float> block_apply(const BlockOperatorT<float>&, const Tensor<float>&, double, Rng&);
template BlockMeasurementT<double> block_apply(const BlockOperatorT<double>&, const Tensor<double>&, double, Rng&);
template Tensor<float> block_adjoint(const BlockOperatorT<float>&, const BlockMeasurementT<float>&);
template Tensor<double> block_adjoint(const BlockOperatorT<double>&, const BlockMeasurementT<double>&);

template class DenseBOp<float>;
template class DenseBOp<double>;
template class RowSubsetBOp<float>;
template class RowSubsetBOp<double>;
template class PerSampleBOp<float>;
template class PerSampleBOp<double>;
template class BlockBOp<float>;
template class BlockBOp<double>;

}  // namespace scsr
