#pragma once

#include <cstdint>
#include <string>

#include "scsr/tensor.hpp"

namespace scsr {

struct MetricReport {
  std::string name;
  double value = 0.0;
  double peak = 0.0;
  int64_t n_items = 0;
};

// 10 log10(||x||^2 / ||x - xhat||^2); +inf for an exact match.
double snr_db(const TensorD& x, const TensorD& xhat);
double snr_db(const TensorF& x, const TensorF& xhat);

// 10 log10(peak^2 / MSE); +inf when MSE is zero.
double psnr_db(const TensorD& x, const TensorD& xhat, double peak = 1.0);
double psnr_db(const TensorF& x, const TensorF& xhat, double peak = 1.0);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), C1=(0.01 peak)^2,
// C2=(0.03 peak)^2. Inputs are [H, W] single-channel.
double ssim(const TensorD& x, const TensorD& xhat, double peak = 1.0);
double ssim(const TensorF& x, const TensorF& xhat, double peak = 1.0);

std::string metric_csv_header();
std::string metric_csv_row(const std::string& dataset, const std::string& method, double ratio,
                           double sigma, const MetricReport& r);

}  // namespace scsr
