#include "scsr/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "scsr/image_io.hpp"

namespace scsr {

namespace {

struct Color {
  float r, g, b;
};

constexpr Color kBlack{0.0f, 0.0f, 0.0f};
constexpr Color kWhite{1.0f, 1.0f, 1.0f};
constexpr Color kGrid{0.85f, 0.85f, 0.85f};

constexpr Color kPalette[] = {
    {0.12f, 0.47f, 0.71f}, {1.00f, 0.50f, 0.05f}, {0.17f, 0.63f, 0.17f},
    {0.84f, 0.15f, 0.16f}, {0.58f, 0.40f, 0.74f}, {0.55f, 0.34f, 0.29f},
    {0.89f, 0.47f, 0.76f}, {0.50f, 0.50f, 0.50f},
};
constexpr int kPaletteSize = 8;

// 5x7 glyphs for ASCII 32..90 (lowercase is folded to uppercase); one byte per
// row, low 5 bits used, bit 4 = leftmost column.
constexpr uint8_t kFont[59][7] = {
    {0, 0, 0, 0, 0, 0, 0},                                              // space
    {0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0, 0b00100},          // !
    {0b01010, 0b01010, 0, 0, 0, 0, 0},                                  // "
    {0b01010, 0b11111, 0b01010, 0b01010, 0b01010, 0b11111, 0b01010},    // #
    {0b00100, 0b01111, 0b10100, 0b01110, 0b00101, 0b11110, 0b00100},    // $
    {0b11001, 0b11010, 0b00010, 0b00100, 0b01000, 0b01011, 0b10011},    // %
    {0b01100, 0b10010, 0b10100, 0b01000, 0b10101, 0b10010, 0b01101},    // &
    {0b00100, 0b00100, 0, 0, 0, 0, 0},                                  // '
    {0b00010, 0b00100, 0b01000, 0b01000, 0b01000, 0b00100, 0b00010},    // (
    {0b01000, 0b00100, 0b00010, 0b00010, 0b00010, 0b00100, 0b01000},    // )
    {0, 0b10101, 0b01110, 0b11111, 0b01110, 0b10101, 0},                // *
    {0, 0b00100, 0b00100, 0b11111, 0b00100, 0b00100, 0},                // +
    {0, 0, 0, 0, 0b01100, 0b00100, 0b01000},                            // ,
    {0, 0, 0, 0b11111, 0, 0, 0},                                        // -
    {0, 0, 0, 0, 0, 0b01100, 0b01100},                                  // .
    {0, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0},                // /
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},    // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},    // 1
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},    // 2
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},    // 3
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},    // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},    // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},    // 6
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},    // 7
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},    // 8
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},    // 9
    {0, 0b01100, 0b01100, 0, 0b01100, 0b01100, 0},                      // :
    {0, 0b01100, 0b01100, 0, 0b01100, 0b00100, 0b01000},                // ;
    {0b00010, 0b00100, 0b01000, 0b10000, 0b01000, 0b00100, 0b00010},    // <
    {0, 0, 0b11111, 0, 0b11111, 0, 0},                                  // =
    {0b01000, 0b00100, 0b00010, 0b00001, 0b00010, 0b00100, 0b01000},    // >
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0, 0b00100},          // ?
    {0b01110, 0b10001, 0b10111, 0b10101, 0b10111, 0b10000, 0b01110},    // @
    {0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001},    // A
    {0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110},    // B
    {0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110},    // C
    {0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100},    // D
    {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111},    // E
    {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000},    // F
    {0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111},    // G
    {0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001},    // H
    {0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},    // I
    {0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100},    // J
    {0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001},    // K
    {0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111},    // L
    {0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001},    // M
    {0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001},    // N
    {0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110},    // O
    {0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000},    // P
    {0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101},    // Q
    {0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001},    // R
    {0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110},    // S
    {0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100},    // T
    {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110},    // U
    {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100},    // V
    {0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010},    // W
    {0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001},    // X
    {0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100},    // Y
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111},    // Z
};

struct Canvas {
  Tensor<float> img;
  int64_t H, W;

  Canvas(int64_t h, int64_t w) : img({h, w, 3}), H(h), W(w) {
    for (int64_t i = 0; i < h * w; ++i) set_index(i, kWhite);
  }
  void set_index(int64_t i, Color c) {
    img.at(i * 3 + 0) = c.r;
    img.at(i * 3 + 1) = c.g;
    img.at(i * 3 + 2) = c.b;
  }
  void set(int64_t r, int64_t c, Color col) {
    if (r < 0 || r >= H || c < 0 || c >= W) return;
    set_index(r * W + c, col);
  }
  void hline(int64_t r, int64_t c0, int64_t c1, Color col) {
    for (int64_t c = std::min(c0, c1); c <= std::max(c0, c1); ++c) set(r, c, col);
  }
  void vline(int64_t c, int64_t r0, int64_t r1, Color col) {
    for (int64_t r = std::min(r0, r1); r <= std::max(r0, r1); ++r) set(r, c, col);
  }
  void line(int64_t r0, int64_t c0, int64_t r1, int64_t c1, Color col) {
    int64_t dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
    int64_t sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
    int64_t err = (dc > dr ? dc : -dr) / 2;
    for (;;) {
      set(r0, c0, col);
      if (r0 == r1 && c0 == c1) break;
      int64_t e = err;
      if (e > -dc) {
        err -= dr;
        c0 += sc;
      }
      if (e < dr) {
        err += dc;
        r0 += sr;
      }
    }
  }
  void marker(int64_t r, int64_t c, Color col) {
    for (int64_t dr = -1; dr <= 1; ++dr)
      for (int64_t dc = -1; dc <= 1; ++dc) set(r + dr, c + dc, col);
  }
  void text(int64_t r, int64_t c, const std::string& s, Color col) {
    int64_t cx = c;
    for (char raw : s) {
      int ch = std::toupper(static_cast<unsigned char>(raw));
      if (ch >= 32 && ch <= 90) {
        const uint8_t* g = kFont[ch - 32];
        for (int64_t gr = 0; gr < 7; ++gr)
          for (int64_t gc = 0; gc < 5; ++gc)
            if ((g[gr] >> (4 - gc)) & 1) set(r + gr, cx + gc, col);
      }
      cx += 6;
    }
  }
};

int64_t text_width(const std::string& s) { return static_cast<int64_t>(s.size()) * 6; }

std::string fmt_tick(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct Ticks {
  double lo, hi, step;
};

// 1-2-5 tick placement spanning [lo, hi] with about n intervals.
Ticks nice_ticks(double lo, double hi, int n) {
  double span = hi - lo;
  double raw = span / n;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double frac = raw / mag;
  double step = (frac < 1.5 ? 1.0 : frac < 3.5 ? 2.0 : frac < 7.5 ? 5.0 : 10.0) * mag;
  return {std::floor(lo / step) * step, std::ceil(hi / step) * step, step};
}

}  // namespace

Tensor<float> render_plot(const std::vector<Series>& series, const PlotSpec& spec) {
  if (series.empty()) throw std::invalid_argument("plot: no series");
  if (spec.width < 160 || spec.height < 120) throw std::invalid_argument("plot: canvas too small");
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool first = true;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("plot: x/y length mismatch");
    if (s.x.empty()) throw std::invalid_argument("plot: empty series");
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        throw std::invalid_argument("plot: non-finite sample");
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  Ticks tx = nice_ticks(xmin, xmax, 6);
  Ticks ty = nice_ticks(ymin, ymax, 5);

  Canvas cv(spec.height, spec.width);
  int64_t left = 70, right = spec.width - 20, top = 34, bottom = spec.height - 46;

  auto map_x = [&](double v) {
    return left + static_cast<int64_t>(std::lround((v - tx.lo) / (tx.hi - tx.lo) *
                                                   static_cast<double>(right - left)));
  };
  auto map_y = [&](double v) {
    return bottom - static_cast<int64_t>(std::lround((v - ty.lo) / (ty.hi - ty.lo) *
                                                     static_cast<double>(bottom - top)));
  };

  for (double v = tx.lo;; v += tx.step) {
    int64_t c = map_x(v);
    cv.vline(c, top, bottom, kGrid);
    std::string lab = fmt_tick(v);
    cv.text(bottom + 6, c - text_width(lab) / 2, lab, kBlack);
    cv.hline(bottom + 1, c, c, kBlack);
    cv.set(bottom + 2, c, kBlack);
    if (v >= tx.hi - tx.step * 1e-9) break;
  }
  for (double v = ty.lo;; v += ty.step) {
    int64_t r = map_y(v);
    cv.hline(r, left, right, kGrid);
    std::string lab = fmt_tick(v);
    cv.text(r - 3, left - 6 - text_width(lab), lab, kBlack);
    if (v >= ty.hi - ty.step * 1e-9) break;
  }
  cv.hline(top, left, right, kBlack);
  cv.hline(bottom, left, right, kBlack);
  cv.vline(left, top, bottom, kBlack);
  cv.vline(right, top, bottom, kBlack);

  cv.text(10, (spec.width - text_width(spec.title)) / 2, spec.title, kBlack);
  cv.text(spec.height - 14, (spec.width - text_width(spec.xlabel)) / 2, spec.xlabel, kBlack);
  cv.text(top - 12, 4, spec.ylabel, kBlack);

  for (size_t si = 0; si < series.size(); ++si) {
    Color col = kPalette[si % kPaletteSize];
    const Series& s = series[si];
    for (size_t i = 0; i < s.x.size(); ++i) {
      int64_t r = map_y(s.y[i]), c = map_x(s.x[i]);
      if (i > 0) cv.line(map_y(s.y[i - 1]), map_x(s.x[i - 1]), r, c, col);
      cv.marker(r, c, col);
    }
  }

  int64_t lw = 0;
  for (const Series& s : series) lw = std::max(lw, text_width(s.label));
  int64_t lx = right - lw - 34, ly = top + 8;
  int64_t lh = static_cast<int64_t>(series.size()) * 12 + 6;
  for (int64_t r = ly - 4; r < ly - 4 + lh; ++r) cv.hline(r, lx - 6, right - 8, kWhite);
  for (size_t si = 0; si < series.size(); ++si) {
    Color col = kPalette[si % kPaletteSize];
    int64_t r = ly + static_cast<int64_t>(si) * 12;
    cv.hline(r + 3, lx, lx + 18, col);
    cv.hline(r + 4, lx, lx + 18, col);
    cv.text(r, lx + 24, series[si].label, kBlack);
  }
  return std::move(cv.img);
}

void save_plot(const std::string& path, const std::vector<Series>& series, const PlotSpec& spec) {
  write_ppm(path, render_plot(series, spec));
}

}  // namespace scsr
