#include "scsr/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace scsr {

namespace {

double sq_norm(const TensorD& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return s;
}

TensorD to_d(const TensorF& t) { return t.cast<double>(); }

constexpr int kWin = 11;
constexpr double kWinSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWin * kWin);
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      double di = i - (kWin - 1) / 2.0;
      double dj = j - (kWin - 1) / 2.0;
      double v = std::exp(-(di * di + dj * dj) / (2.0 * kWinSigma * kWinSigma));
      w[static_cast<size_t>(i * kWin + j)] = v;
      sum += v;
    }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace

double snr_db(const TensorD& x, const TensorD& xhat) {
  if (x.numel() != xhat.numel()) throw std::invalid_argument("snr: size mismatch");
  double px = sq_norm(x);
  if (px == 0.0) throw std::invalid_argument("snr: zero reference signal");
  double pe = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double d = x.at(i) - xhat.at(i);
    pe += d * d;
  }
  if (pe == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(px / pe);
}

double snr_db(const TensorF& x, const TensorF& xhat) { return snr_db(to_d(x), to_d(xhat)); }

double psnr_db(const TensorD& x, const TensorD& xhat, double peak) {
  if (x.numel() != xhat.numel()) throw std::invalid_argument("psnr: size mismatch");
  if (peak <= 0.0) throw std::invalid_argument("psnr: peak must be positive");
  double mse = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double d = x.at(i) - xhat.at(i);
    mse += d * d;
  }
  mse /= static_cast<double>(x.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr_db(const TensorF& x, const TensorF& xhat, double peak) {
  return psnr_db(to_d(x), to_d(xhat), peak);
}

double ssim(const TensorD& x, const TensorD& xhat, double peak) {
  if (x.shape.size() != 2 || xhat.shape.size() != 2 || !same_shape(x, xhat))
    throw std::invalid_argument("ssim: inputs must be same-shape [H, W] images");
  int64_t H = x.shape[0], W = x.shape[1];
  if (H < kWin || W < kWin) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  static const std::vector<double> win = gaussian_window();
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double acc = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i + kWin <= H; ++i)
    for (int64_t j = 0; j + kWin <= W; ++j) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int a = 0; a < kWin; ++a)
        for (int b = 0; b < kWin; ++b) {
          double wv = win[static_cast<size_t>(a * kWin + b)];
          double xv = x.at((i + a) * W + j + b);
          double yv = xhat.at((i + a) * W + j + b);
          mx += wv * xv;
          my += wv * yv;
          mxx += wv * xv * xv;
          myy += wv * yv * yv;
          mxy += wv * xv * yv;
        }
      double vx = mxx - mx * mx;
      double vy = myy - my * my;
      double cxy = mxy - mx * my;
      double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
      double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      acc += num / den;
      ++count;
    }
  return acc / static_cast<double>(count);
}

double ssim(const TensorF& x, const TensorF& xhat, double peak) {
  return ssim(to_d(x), to_d(xhat), peak);
}

std::string metric_csv_header() { return "dataset,method,ratio,sigma,metric,value\n"; }

std::string metric_csv_row(const std::string& dataset, const std::string& method, double ratio,
                           double sigma, const MetricReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << dataset << ',' << method << ',' << ratio << ',' << sigma << ',' << r.name << ','
     << r.value << '\n';
  return os.str();
}

}  // namespace scsr
