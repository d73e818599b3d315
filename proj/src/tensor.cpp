#include "langseg/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace langseg {

static_assert(std::endian::native == std::endian::little,
              "TNSR serialization assumes a little-endian host");
static_assert(sizeof(double) == 8);

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::size_t Tensor::checked_size(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero dimension in shape " + shape_to_string(shape));
  }
  return shape_product(shape);
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void write_tnsr(std::ostream& out, const Tensor& t) {
  out << "TNSR v1 " << t.rank();
  for (std::size_t i = 0; i < t.rank(); ++i) out << ' ' << t.dim(i);
  out << '\n';
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw IoError("failed writing TNSR payload");
}

Tensor read_tnsr(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("failed reading TNSR header");
  std::istringstream hdr(line);
  std::string magic, version;
  hdr >> magic >> version;
  if (magic != "TNSR" || version != "v1") {
    throw IoError("bad TNSR header: '" + line + "'");
  }
  std::size_t rank = 0;
  if (!(hdr >> rank)) throw IoError("bad TNSR rank in header: '" + line + "'");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (!(hdr >> shape[i])) throw IoError("bad TNSR dims in header: '" + line + "'");
  }
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(t.size() * sizeof(double))) {
    throw IoError("truncated TNSR payload (expected " + std::to_string(t.size()) + " doubles)");
  }
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_tnsr(out, t);
  if (!out) throw IoError("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return read_tnsr(in);
}

}  // namespace langseg
