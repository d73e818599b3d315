#pragma once

#include <iosfwd>
#include <string>

#include "langseg/tensor.hpp"

namespace langseg {

// Binary PPM (P6, maxval 255). Image is [3 x H x W] in [0,1]; channels are
// quantized to round(v * 255) on write and mapped back as byte / 255.
void write_ppm(std::ostream& out, const Tensor& image);
Tensor read_ppm(std::istream& in);
void save_ppm(const std::string& path, const Tensor& image);
Tensor load_ppm(const std::string& path);

// Binary PGM (P5, maxval 255). Mask is [H x W]; pixel byte = class id.
void write_pgm(std::ostream& out, const Tensor& mask);
Tensor read_pgm(std::istream& in);
void save_pgm(const std::string& path, const Tensor& mask);
Tensor load_pgm(const std::string& path);

}  // namespace langseg
