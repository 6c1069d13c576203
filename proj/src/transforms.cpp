#include "scsr/transforms.hpp"

#include <array>
#include <stdexcept>

namespace scsr {

GridPerm perm_of(Dihedral t, int64_t H, int64_t W) {
  GridPerm p;
  bool swaps = t == Dihedral::rot90 || t == Dihedral::rot270 || t == Dihedral::transpose ||
               t == Dihedral::anti_transpose;
  p.out_h = swaps ? W : H;
  p.out_w = swaps ? H : W;
  p.src.resize(static_cast<size_t>(H * W));
  for (int64_t i = 0; i < p.out_h; ++i)
    for (int64_t j = 0; j < p.out_w; ++j) {
      int64_t si = 0, sj = 0;
      switch (t) {
        case Dihedral::identity: si = i; sj = j; break;
        case Dihedral::rot90: si = j; sj = W - 1 - i; break;
        case Dihedral::rot180: si = H - 1 - i; sj = W - 1 - j; break;
        case Dihedral::rot270: si = H - 1 - j; sj = i; break;
        case Dihedral::flip_h: si = i; sj = W - 1 - j; break;
        case Dihedral::flip_v: si = H - 1 - i; sj = j; break;
        case Dihedral::transpose: si = j; sj = i; break;
        case Dihedral::anti_transpose: si = H - 1 - j; sj = W - 1 - i; break;
      }
      p.src[static_cast<size_t>(i * p.out_w + j)] = si * W + sj;
    }
  return p;
}

namespace {

// The composition and inverse tables are derived once from the permutations
// themselves on an asymmetric grid, so no hand-written table can drift from
// the coordinate maps above.
struct Tables {
  std::array<std::array<Dihedral, 8>, 8> comp;
  std::array<Dihedral, 8> inv;
  Tables() {
    const int64_t H = 3, W = 4;
    auto action = [&](Dihedral a, Dihedral b) {
      GridPerm pb = perm_of(b, H, W);
      GridPerm pa = perm_of(a, pb.out_h, pb.out_w);
      std::vector<int64_t> src(pa.src.size());
      for (size_t i = 0; i < src.size(); ++i) src[i] = pb.src[static_cast<size_t>(pa.src[i])];
      return std::pair{src, std::pair{pa.out_h, pa.out_w}};
    };
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        auto [src, dims] = action(static_cast<Dihedral>(a), static_cast<Dihedral>(b));
        bool found = false;
        for (int c = 0; c < 8; ++c) {
          GridPerm pc = perm_of(static_cast<Dihedral>(c), H, W);
          if (pc.out_h == dims.first && pc.out_w == dims.second && pc.src == src) {
            comp[static_cast<size_t>(a)][static_cast<size_t>(b)] = static_cast<Dihedral>(c);
            found = true;
            break;
          }
        }
        if (!found) throw std::logic_error("dihedral composition fell outside the group");
      }
    for (int t = 0; t < 8; ++t) {
      for (int c = 0; c < 8; ++c)
        if (comp[static_cast<size_t>(c)][static_cast<size_t>(t)] == Dihedral::identity) {
          inv[static_cast<size_t>(t)] = static_cast<Dihedral>(c);
          break;
        }
    }
  }
};

const Tables& tables() {
  static Tables t;
  return t;
}

}  // namespace

Dihedral compose(Dihedral a, Dihedral b) {
  return tables().comp[static_cast<size_t>(a)][static_cast<size_t>(b)];
}

Dihedral inverse(Dihedral t) { return tables().inv[static_cast<size_t>(t)]; }

template <typename T>
Tensor<T> apply_transform(Dihedral t, const Tensor<T>& img) {
  int64_t C = 1, H, W;
  if (img.shape.size() == 2) {
    H = img.shape[0];
    W = img.shape[1];
  } else if (img.shape.size() == 3) {
    C = img.shape[0];
    H = img.shape[1];
    W = img.shape[2];
  } else {
    throw std::invalid_argument("apply_transform expects [H,W] or [C,H,W]");
  }
  GridPerm p = perm_of(t, H, W);
  Tensor<T> out(img.shape.size() == 2 ? std::vector<int64_t>{p.out_h, p.out_w}
                                      : std::vector<int64_t>{C, p.out_h, p.out_w});
  int64_t P = H * W;
  for (int64_t c = 0; c < C; ++c) {
    const T* in_c = img.ptr() + c * P;
    T* out_c = out.ptr() + c * P;
    for (int64_t q = 0; q < P; ++q) out_c[q] = in_c[p.src[static_cast<size_t>(q)]];
  }
  return out;
}

const std::vector<Dihedral>& elements(TransformDomain d) {
  static const std::vector<Dihedral> all = {
      Dihedral::identity, Dihedral::rot90,  Dihedral::rot180,    Dihedral::rot270,
      Dihedral::flip_h,   Dihedral::flip_v, Dihedral::transpose, Dihedral::anti_transpose};
  static const std::vector<Dihedral> rect = {Dihedral::identity, Dihedral::rot180,
                                             Dihedral::flip_h, Dihedral::flip_v};
  static const std::vector<Dihedral> line = {Dihedral::identity, Dihedral::flip_h};
  static const std::vector<Dihedral> ident = {Dihedral::identity};
  switch (d) {
    case TransformDomain::square_image: return all;
    case TransformDomain::rect_image: return rect;
    case TransformDomain::one_d: return line;
    case TransformDomain::identity_only: return ident;
  }
  throw std::invalid_argument("unknown transform domain");
}

Dihedral sample_uniform(Rng& rng, TransformDomain d) {
  const auto& set = elements(d);
  return set[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(set.size()) - 1))];
}

TransformDomain domain_for(int64_t H, int64_t W) {
  if (H == 1 || W == 1) return TransformDomain::one_d;
  return H == W ? TransformDomain::square_image : TransformDomain::rect_image;
}

template <typename T>
SamplingMatrixT<T> compose_operator(double mask_r, const SamplingMatrixT<T>& A, Dihedral t,
                                    int64_t H, int64_t W, Rng& rng) {
  if (H * W != A.N) throw std::invalid_argument("compose_operator: grid does not match N");
  GridPerm p = perm_of(t, H, W);
  if (p.out_h != H || p.out_w != W)
    throw std::invalid_argument("compose_operator: transform changes the pixel grid shape");
  SamplingMatrixT<T> out;
  out.data = Tensor<T>({A.M, A.N});
  // (A T x)_m = sum_p A[m,p] x[src[p]], so column src[p] of A T holds A[:,p].
  for (int64_t m = 0; m < A.M; ++m) {
    const T* arow = A.data.ptr() + m * A.N;
    T* orow = out.data.ptr() + m * A.N;
    for (int64_t q = 0; q < A.N; ++q) orow[p.src[static_cast<size_t>(q)]] = arow[q];
  }
  out.kind = MatrixKind::derived;
  out.M = A.M;
  out.N = A.N;
  out.gamma = A.gamma;
  if (mask_r > 0) {
    for (int64_t m = 0; m < A.M; ++m)
      if (rng.bernoulli(mask_r))
        for (int64_t j = 0; j < A.N; ++j) out.data.at(m * A.N + j) = T(0);
  }
  return out;
}

template Tensor<float> apply_transform(Dihedral, const Tensor<float>&);
template Tensor<double> apply_transform(Dihedral, const Tensor<double>&);
template SamplingMatrixT<float> compose_operator(double, const SamplingMatrixT<float>&, Dihedral, int64_t, int64_t, Rng&);
template SamplingMatrixT<double> compose_operator(double, const SamplingMatrixT<double>&, Dihedral, int64_t, int64_t, Rng&);

}  // namespace scsr
