#pragma once

#include <cstdint>
#include <vector>

#include "scsr/rng.hpp"
#include "scsr/sensing.hpp"
#include "scsr/tensor.hpp"

namespace scsr {

// The eight exact pixel permutations of the square (4 rotations x reflection).
// rot90 is counter-clockwise; this convention is fixed so checkpoints and
// ensemble draws replay identically everywhere.
enum class Dihedral : uint8_t {
  identity = 0,
  rot90 = 1,
  rot180 = 2,
  rot270 = 3,
  flip_h = 4,
  flip_v = 5,
  transpose = 6,
  anti_transpose = 7,
};

constexpr int kDihedralCount = 8;

// out[i * out_w + j] = in[src[i * out_w + j]]
struct GridPerm {
  std::vector<int64_t> src;
  int64_t out_h = 0, out_w = 0;
};

GridPerm perm_of(Dihedral t, int64_t H, int64_t W);

// compose(a, b): apply b first, then a.
Dihedral compose(Dihedral a, Dihedral b);
Dihedral inverse(Dihedral t);

// [H,W] or [C,H,W]; transpose-family elements swap the spatial dims.
template <typename T>
Tensor<T> apply_transform(Dihedral t, const Tensor<T>& img);

// Which elements keep the grid shape valid for a given signal layout:
// square images admit all 8, rectangular ones the 4 shape-preserving
// elements, 1-D signals the {identity, reverse} pair, and identity_only is
// the degenerate test mode.
enum class TransformDomain : uint8_t {
  square_image = 0,
  rect_image = 1,
  one_d = 2,
  identity_only = 3,
};

const std::vector<Dihedral>& elements(TransformDomain d);
Dihedral sample_uniform(Rng& rng, TransformDomain d);
TransformDomain domain_for(int64_t H, int64_t W);

// Materializes M * A * T where T permutes the H x W pixel grid and M zeroes
// each row with probability mask_r.
template <typename T>
SamplingMatrixT<T> compose_operator(double mask_r, const SamplingMatrixT<T>& A, Dihedral t,
                                    int64_t H, int64_t W, Rng& rng);

}  // namespace scsr
