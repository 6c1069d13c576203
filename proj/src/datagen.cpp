#include "scsr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "scsr/io_binary.hpp"

namespace scsr {

const char* toy_dist_name(ToyDist d) {
  switch (d) {
    case ToyDist::dc: return "DC";
    case ToyDist::gm: return "GM";
    case ToyDist::g: return "G";
    case ToyDist::u: return "U";
  }
  throw std::invalid_argument("unknown distribution tag");
}

ToyDist parse_toy_dist(const std::string& name) {
  if (name == "DC" || name == "dc") return ToyDist::dc;
  if (name == "GM" || name == "gm") return ToyDist::gm;
  if (name == "G" || name == "g") return ToyDist::g;
  if (name == "U" || name == "u") return ToyDist::u;
  throw std::invalid_argument("unknown distribution name: " + name);
}

TensorD dct_basis(int64_t N) {
  if (N < 1) throw std::invalid_argument("dct_basis: N must be >= 1");
  TensorD psi({N, N});
  double c0 = std::sqrt(1.0 / static_cast<double>(N));
  double ck = std::sqrt(2.0 / static_cast<double>(N));
  for (int64_t n = 0; n < N; ++n)
    for (int64_t k = 0; k < N; ++k) {
      double ang = M_PI * (2.0 * static_cast<double>(n) + 1.0) * static_cast<double>(k) /
                   (2.0 * static_cast<double>(N));
      psi.at(n * N + k) = (k == 0 ? c0 : ck) * std::cos(ang);
    }
  return psi;
}

double dc_density(double s1, double s2) {
  constexpr double kSharp = 25.0 / 18.0;
  double a = 4.0 * s1, b = 4.0 * s2;
  double lobes = std::exp(-kSharp * (a - 2.0) * (a - 2.0)) +
                 std::exp(-kSharp * (a + 2.0) * (a + 2.0));
  double rad = std::sqrt(a * a + b * b) - 2.0;
  return lobes * std::exp(-kSharp * rad * rad);
}

namespace {

double dc_envelope() {
  static const double env = [] {
    constexpr int kGrid = 401;
    double best = 0.0;
    for (int i = 0; i < kGrid; ++i)
      for (int j = 0; j < kGrid; ++j) {
        double s1 = -2.0 + 4.0 * i / (kGrid - 1);
        double s2 = -2.0 + 4.0 * j / (kGrid - 1);
        best = std::max(best, dc_density(s1, s2));
      }
    return best * 1.05;
  }();
  return env;
}

std::pair<double, double> sample_dc(Rng& rng) {
  double env = dc_envelope();
  constexpr int64_t kMaxAttempts = 100000;
  for (;;) {
    for (int64_t a = 0; a < kMaxAttempts; ++a) {
      double s1 = rng.uniform(-2.0, 2.0);
      double s2 = rng.uniform(-2.0, 2.0);
      double u = rng.uniform();
      if (u * env <= dc_density(s1, s2)) return {s1, s2};
    }
    env *= 2.0;
  }
}

}  // namespace

std::pair<double, double> sample_coeffs(ToyDist dist, Rng& rng) {
  switch (dist) {
    case ToyDist::dc:
      return sample_dc(rng);
    case ToyDist::gm: {
      int64_t c = rng.uniform_int(0, 3);
      double m1 = (c & 1) ? -1.0 : 1.0;
      double m2 = (c & 2) ? -1.0 : 1.0;
      double sd = std::sqrt(0.1);
      return {m1 + sd * rng.normal(), m2 + sd * rng.normal()};
    }
    case ToyDist::g:
      return {rng.normal(), rng.normal()};
    case ToyDist::u:
      return {rng.uniform(), rng.uniform()};
  }
  throw std::invalid_argument("unknown distribution tag");
}

void ToySpec::validate() const {
  if (dim < 2) throw std::invalid_argument("toy spec: dim must be >= 2");
  if (n_signals < 1) throw std::invalid_argument("toy spec: n_signals must be >= 1");
  if (n_train < 0 || n_test < 0 || n_train + n_test != n_signals)
    throw std::invalid_argument("toy spec: train/test split must partition the pool");
}

ToyDataset gen_toy_dataset(const ToySpec& spec) {
  spec.validate();
  int64_t N = spec.dim;
  TensorD psi = dct_basis(N);
  TensorD pool({spec.n_signals, N});
  for (int64_t i = 0; i < spec.n_signals; ++i) {
    Rng rng = make_rng(spec.seed, streams::dataset, static_cast<uint64_t>(i));
    auto [s1, s2] = sample_coeffs(spec.dist, rng);
    for (int64_t n = 0; n < N; ++n)
      pool.at(i * N + n) = s1 * psi.at(n * N + 0) + s2 * psi.at(n * N + 1);
  }
  std::vector<int64_t> order(static_cast<size_t>(spec.n_signals));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = make_rng(spec.seed, streams::dataset, 0, 1);
  std::shuffle(order.begin(), order.end(), shuffle_rng.raw());
  ToyDataset out;
  out.train = TensorD({spec.n_train, N});
  out.test = TensorD({spec.n_test, N});
  for (int64_t i = 0; i < spec.n_train; ++i)
    std::copy_n(pool.ptr() + order[static_cast<size_t>(i)] * N, N, out.train.ptr() + i * N);
  for (int64_t i = 0; i < spec.n_test; ++i)
    std::copy_n(pool.ptr() + order[static_cast<size_t>(spec.n_train + i)] * N, N,
                out.test.ptr() + i * N);
  return out;
}

void write_scsx(const std::string& path, ToyDist dist, uint64_t seed, const TensorD& signals) {
  if (signals.shape.size() != 2) throw std::invalid_argument("scsx: signals must be {count, N}");
  BinWriter w(path);
  w.magic("SCSX");
  w.u32(1);
  w.u32(static_cast<uint32_t>(signals.shape[1]));
  w.u32(static_cast<uint32_t>(signals.shape[0]));
  w.u8(static_cast<uint8_t>(dist));
  w.u64(seed);
  w.values(signals.data);
  w.close();
}

ScsxFile read_scsx(const std::string& path) {
  BinReader r(path);
  r.expect_magic("SCSX");
  uint32_t version = r.u32();
  if (version != 1) throw FormatError("scsx: unsupported version in " + path);
  int64_t N = r.u32();
  int64_t count = r.u32();
  if (N < 1 || count < 1 || N > (1 << 20) || count > (1 << 24))
    throw FormatError("scsx: implausible dimensions in " + path);
  ScsxFile f;
  f.dist = static_cast<ToyDist>(r.u8());
  if (f.dist != ToyDist::dc && f.dist != ToyDist::gm && f.dist != ToyDist::g &&
      f.dist != ToyDist::u)
    throw FormatError("scsx: unknown distribution tag in " + path);
  f.seed = r.u64();
  f.signals = TensorD({count, N});
  r.values(f.signals.data, static_cast<size_t>(count * N));
  return f;
}

namespace {

uint32_t be32_read(BinReader& r) {
  uint8_t b[4];
  r.bytes(b, 4);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void be32_write(BinWriter& w, uint32_t v) {
  uint8_t b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
  w.bytes(b, 4);
}

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

MnistSet load_mnist(const std::string& images_path, const std::string& labels_path) {
  BinReader r(images_path);
  if (be32_read(r) != kIdxImagesMagic)
    throw FormatError("idx: bad image magic in " + images_path);
  int64_t count = be32_read(r);
  MnistSet set;
  set.rows = be32_read(r);
  set.cols = be32_read(r);
  if (count < 1 || set.rows < 1 || set.cols < 1 || set.rows > 4096 || set.cols > 4096)
    throw FormatError("idx: implausible dimensions in " + images_path);
  int64_t pixels = set.rows * set.cols;
  std::vector<uint8_t> raw(static_cast<size_t>(count * pixels));
  r.bytes(raw.data(), raw.size());
  set.images = Tensor<float>({count, pixels});
  for (size_t i = 0; i < raw.size(); ++i)
    set.images.at(static_cast<int64_t>(i)) = static_cast<float>(raw[i]) / 255.0f;
  if (!labels_path.empty()) {
    BinReader lr(labels_path);
    if (be32_read(lr) != kIdxLabelsMagic)
      throw FormatError("idx: bad label magic in " + labels_path);
    int64_t lcount = be32_read(lr);
    if (lcount != count) throw FormatError("idx: label count does not match images");
    set.labels.resize(static_cast<size_t>(lcount));
    lr.bytes(set.labels.data(), set.labels.size());
  }
  return set;
}

void write_idx_images(const std::string& path, const std::vector<uint8_t>& pixels, int64_t count,
                      int64_t rows, int64_t cols) {
  if (static_cast<int64_t>(pixels.size()) != count * rows * cols)
    throw std::invalid_argument("idx: pixel buffer size does not match dimensions");
  BinWriter w(path);
  be32_write(w, kIdxImagesMagic);
  be32_write(w, static_cast<uint32_t>(count));
  be32_write(w, static_cast<uint32_t>(rows));
  be32_write(w, static_cast<uint32_t>(cols));
  w.values(pixels);
  w.close();
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
  BinWriter w(path);
  be32_write(w, kIdxLabelsMagic);
  be32_write(w, static_cast<uint32_t>(labels.size()));
  w.values(labels);
  w.close();
}

namespace {

// 5x7 digit glyphs, one bit per cell, row-major top to bottom.
constexpr uint8_t kGlyphs[10][7] = {
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},
};

double glyph_bilinear(int digit, double u, double v) {
  auto cell = [&](int64_t x, int64_t y) -> double {
    if (x < 0 || x >= 5 || y < 0 || y >= 7) return 0.0;
    return (kGlyphs[digit][y] >> (4 - x)) & 1 ? 1.0 : 0.0;
  };
  double p = u - 0.5, q = v - 0.5;
  int64_t x0 = static_cast<int64_t>(std::floor(p));
  int64_t y0 = static_cast<int64_t>(std::floor(q));
  double fx = p - static_cast<double>(x0), fy = q - static_cast<double>(y0);
  return (1 - fx) * (1 - fy) * cell(x0, y0) + fx * (1 - fy) * cell(x0 + 1, y0) +
         (1 - fx) * fy * cell(x0, y0 + 1) + fx * fy * cell(x0 + 1, y0 + 1);
}

}  // namespace

void gen_digit_corpus(const std::string& images_path, const std::string& labels_path,
                      int64_t count, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("digit corpus: count must be >= 1");
  constexpr int64_t kSide = 28;
  std::vector<uint8_t> pixels(static_cast<size_t>(count * kSide * kSide));
  std::vector<uint8_t> labels(static_cast<size_t>(count));
  std::vector<double> sharp(kSide * kSide), soft(kSide * kSide);
  for (int64_t i = 0; i < count; ++i) {
    int digit = static_cast<int>(i % 10);
    labels[static_cast<size_t>(i)] = static_cast<uint8_t>(digit);
    Rng rng = make_rng(seed, streams::dataset, static_cast<uint64_t>(i));
    double theta = rng.uniform(-0.2, 0.2);
    double height = rng.uniform(18.0, 24.0);
    double ox = 14.0 + rng.uniform(-2.0, 2.0);
    double oy = 14.0 + rng.uniform(-2.0, 2.0);
    double intensity = rng.uniform(0.7, 1.0);
    double k = height / 7.0, ct = std::cos(theta), st = std::sin(theta);
    for (int64_t r = 0; r < kSide; ++r)
      for (int64_t c = 0; c < kSide; ++c) {
        double dx = static_cast<double>(c) + 0.5 - ox;
        double dy = static_cast<double>(r) + 0.5 - oy;
        double u = 2.5 + (dx * ct + dy * st) / k;
        double v = 3.5 + (-dx * st + dy * ct) / k;
        sharp[static_cast<size_t>(r * kSide + c)] = intensity * glyph_bilinear(digit, u, v);
      }
    // 3x3 binomial blur softens the stroke edges
    auto px = [&](int64_t r, int64_t c) -> double {
      if (r < 0 || r >= kSide || c < 0 || c >= kSide) return 0.0;
      return sharp[static_cast<size_t>(r * kSide + c)];
    };
    static const double kKern[3] = {0.25, 0.5, 0.25};
    for (int64_t r = 0; r < kSide; ++r)
      for (int64_t c = 0; c < kSide; ++c) {
        double acc = 0.0;
        for (int64_t dr = -1; dr <= 1; ++dr)
          for (int64_t dc = -1; dc <= 1; ++dc)
            acc += kKern[dr + 1] * kKern[dc + 1] * px(r + dr, c + dc);
        soft[static_cast<size_t>(r * kSide + c)] = acc;
      }
    for (int64_t j = 0; j < kSide * kSide; ++j) {
      double v = std::clamp(soft[static_cast<size_t>(j)], 0.0, 1.0);
      pixels[static_cast<size_t>(i * kSide * kSide + j)] =
          static_cast<uint8_t>(std::lround(v * 255.0));
    }
  }
  write_idx_images(images_path, pixels, count, kSide, kSide);
  if (!labels_path.empty()) write_idx_labels(labels_path, labels);
}

Tensor<float> rgb_to_luma(const Tensor<float>& rgb) {
  if (rgb.shape.size() != 3 || rgb.shape[2] != 3)
    throw std::invalid_argument("luma: expected an {H, W, 3} tensor");
  int64_t H = rgb.shape[0], W = rgb.shape[1];
  Tensor<float> y({H, W});
  for (int64_t i = 0; i < H * W; ++i) {
    const float* p = rgb.ptr() + i * 3;
    y.at(i) = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return y;
}

Tensor<float> crop_blocks(const std::vector<Tensor<float>>& images, int64_t B, int64_t count,
                          Rng& rng) {
  if (B < 1) throw std::invalid_argument("crop: block size must be >= 1");
  if (count < 0) throw std::invalid_argument("crop: negative count");
  std::vector<int64_t> ok;
  for (size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (im.shape.size() != 2) throw std::invalid_argument("crop: images must be {H, W}");
    if (im.shape[0] < B || im.shape[1] < B)
      std::cerr << "crop: skipping image " << i << " smaller than " << B << "x" << B << "\n";
    else
      ok.push_back(static_cast<int64_t>(i));
  }
  if (ok.empty()) throw std::invalid_argument("crop: no image is large enough");
  Tensor<float> out({count, B * B});
  for (int64_t k = 0; k < count; ++k) {
    const auto& im = images[static_cast<size_t>(ok[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(ok.size()) - 1))])];
    int64_t H = im.shape[0], W = im.shape[1];
    int64_t top = rng.uniform_int(0, H - B);
    int64_t left = rng.uniform_int(0, W - B);
    for (int64_t r = 0; r < B; ++r)
      std::copy_n(im.ptr() + (top + r) * W + left, B, out.ptr() + k * B * B + r * B);
  }
  return out;
}

}  // namespace scsr
