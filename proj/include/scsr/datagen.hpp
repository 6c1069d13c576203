#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scsr/rng.hpp"
#include "scsr/tensor.hpp"

namespace scsr {

// 1-D sparse toy signals: x = Psi s with s = [s1, s2, 0, ..., 0], the leading
// pair drawn from one of four bivariate distributions; plus IDX-format digit
// image ingestion and block cropping for training corpora.

enum class ToyDist : uint8_t { dc = 0, gm = 1, g = 2, u = 3 };

const char* toy_dist_name(ToyDist d);
ToyDist parse_toy_dist(const std::string& name);

// Orthonormal type-II DCT matrix; column k is the k-th basis vector, so
// column 0 is the constant vector 1/sqrt(N).
TensorD dct_basis(int64_t N);

// Unnormalized double-crescent density.
double dc_density(double s1, double s2);

// One coefficient pair from the requested distribution. DC uses rejection
// sampling against a uniform proposal on [-2,2]^2 with a grid-probed envelope;
// envelope exhaustion widens the bound and keeps sampling rather than
// truncating the tails.
std::pair<double, double> sample_coeffs(ToyDist dist, Rng& rng);

struct ToySpec {
  ToyDist dist = ToyDist::g;
  int64_t n_signals = 1000;
  int64_t dim = 32;
  int64_t n_train = 900;
  int64_t n_test = 100;
  uint64_t seed = 0;
  void validate() const;
};

struct ToyDataset {
  TensorD train;  // {n_train, dim}
  TensorD test;   // {n_test, dim}
};

// Deterministic per seed: per-signal coefficient streams, then a random
// train/test split of the generated pool.
ToyDataset gen_toy_dataset(const ToySpec& spec);

// SCSX signal container: magic, version, dims, distribution tag, seed, then
// raw 64-bit samples row-major.
void write_scsx(const std::string& path, ToyDist dist, uint64_t seed, const TensorD& signals);

struct ScsxFile {
  ToyDist dist = ToyDist::g;
  uint64_t seed = 0;
  TensorD signals;  // {count, N}
};
ScsxFile read_scsx(const std::string& path);

struct MnistSet {
  int64_t rows = 0;
  int64_t cols = 0;
  Tensor<float> images;         // {count, rows*cols}, bytes scaled to [0,1]
  std::vector<uint8_t> labels;  // empty when no label file was given
};

// Standard IDX readers/writers (big-endian headers, raw bytes).
MnistSet load_mnist(const std::string& images_path, const std::string& labels_path = "");
void write_idx_images(const std::string& path, const std::vector<uint8_t>& pixels, int64_t count,
                      int64_t rows, int64_t cols);
void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

// Procedural 28x28 digit corpus in IDX layout: anti-aliased glyphs with random
// pose and intensity, balanced over digits 0..9, bit-reproducible per seed.
// Stands in for the real handwritten corpus when no IDX files are available.
void gen_digit_corpus(const std::string& images_path, const std::string& labels_path,
                      int64_t count, uint64_t seed);

// BT.601 luminance from an interleaved {H, W, 3} RGB tensor.
Tensor<float> rgb_to_luma(const Tensor<float>& rgb);

// Uniformly placed B x B crops from grayscale {H, W} images, flattened
// row-major to {count, B*B}. Images smaller than B are skipped with a warning.
Tensor<float> crop_blocks(const std::vector<Tensor<float>>& images, int64_t B, int64_t count,
                          Rng& rng);

}  // namespace scsr
