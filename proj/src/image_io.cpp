#include "scsr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "scsr/io_binary.hpp"

namespace scsr {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comment lines.
std::string header_token(std::istream& in, const std::string& path) {
  std::string tok;
  for (;;) {
    int c = in.get();
    if (c == EOF) throw FormatError("truncated header in " + path);
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
}

int64_t header_int(std::istream& in, const std::string& path) {
  std::string tok = header_token(in, path);
  try {
    size_t pos = 0;
    int64_t v = std::stoll(tok, &pos);
    if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad header value '" + tok + "' in " + path);
  }
}

Tensor<float> read_netpbm(const std::string& path, const char* magic, int64_t channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for read: " + path);
  std::string m = header_token(in, path);
  if (m != magic) throw FormatError("bad magic '" + m + "' in " + path);
  int64_t W = header_int(in, path);
  int64_t H = header_int(in, path);
  int64_t maxval = header_int(in, path);
  if (W < 1 || H < 1 || W > 65536 || H > 65536)
    throw FormatError("implausible dimensions in " + path);
  if (maxval < 1 || maxval > 255) throw FormatError("only 8-bit samples supported: " + path);
  // single whitespace byte separates the header from the raster
  std::vector<uint8_t> raw(static_cast<size_t>(H * W * channels));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw FormatError("truncated raster in " + path);
  Tensor<float> img(channels == 1 ? std::vector<int64_t>{H, W}
                                  : std::vector<int64_t>{H, W, channels});
  float scale = 1.0f / static_cast<float>(maxval);
  for (size_t i = 0; i < raw.size(); ++i)
    img.at(static_cast<int64_t>(i)) = static_cast<float>(raw[i]) * scale;
  return img;
}

void write_netpbm(const std::string& path, const char* magic, const Tensor<float>& img,
                  int64_t H, int64_t W, int64_t channels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for write: " + path);
  out << magic << "\n" << W << " " << H << "\n255\n";
  std::vector<uint8_t> raw(static_cast<size_t>(H * W * channels));
  for (size_t i = 0; i < raw.size(); ++i) {
    float v = std::clamp(img.at(static_cast<int64_t>(i)), 0.0f, 1.0f);
    raw[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError("write failed: " + path);
}

}  // namespace

Tensor<float> read_pgm(const std::string& path) { return read_netpbm(path, "P5", 1); }

void write_pgm(const std::string& path, const Tensor<float>& img) {
  if (img.shape.size() != 2) throw std::invalid_argument("pgm: expected an {H, W} tensor");
  write_netpbm(path, "P5", img, img.shape[0], img.shape[1], 1);
}

Tensor<float> read_ppm(const std::string& path) { return read_netpbm(path, "P6", 3); }

void write_ppm(const std::string& path, const Tensor<float>& rgb) {
  if (rgb.shape.size() != 3 || rgb.shape[2] != 3)
    throw std::invalid_argument("ppm: expected an {H, W, 3} tensor");
  write_netpbm(path, "P6", rgb, rgb.shape[0], rgb.shape[1], 3);
}

}  // namespace scsr
