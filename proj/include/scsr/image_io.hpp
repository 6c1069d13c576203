#pragma once

#include <string>

#include "scsr/tensor.hpp"

namespace scsr {

// Binary PGM (P5) and PPM (P6) with 8-bit samples. Pixels map to floats in
// [0,1]; writing clamps to that range before quantizing.

Tensor<float> read_pgm(const std::string& path);           // {H, W}
void write_pgm(const std::string& path, const Tensor<float>& img);

Tensor<float> read_ppm(const std::string& path);           // {H, W, 3}
void write_ppm(const std::string& path, const Tensor<float>& rgb);

}  // namespace scsr
