#include "langseg/pnm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "langseg/errors.hpp"

namespace langseg {

namespace {

unsigned char quantize(double v) {
  double scaled = std::round(v * 255.0);
  if (scaled < 0.0) scaled = 0.0;
  if (scaled > 255.0) scaled = 255.0;
  return static_cast<unsigned char>(scaled);
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw DataError("truncated PNM header");
  return tok;
}

std::size_t parse_dim(const std::string& tok, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    throw DataError(std::string("bad PNM ") + what + ": " + tok);
  }
  if (pos != tok.size() || v == 0) {
    throw DataError(std::string("bad PNM ") + what + ": " + tok);
  }
  return static_cast<std::size_t>(v);
}

void read_header(std::istream& in, const char* magic, std::size_t& w,
                 std::size_t& h) {
  if (next_token(in) != magic) {
    throw DataError(std::string("expected ") + magic + " header");
  }
  w = parse_dim(next_token(in), "width");
  h = parse_dim(next_token(in), "height");
  if (next_token(in) != "255") throw DataError("PNM maxval must be 255");
  // exactly one whitespace byte separates maxval from pixel data; next_token
  // has already consumed it as the delimiter
}

std::vector<unsigned char> read_bytes(std::istream& in, std::size_t n) {
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw DataError("truncated PNM pixel data");
  }
  return buf;
}

}  // namespace

void write_ppm(std::ostream& out, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("write_ppm expects [3 x H x W], got " +
                     shape_to_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        row[x * 3 + c] = quantize(image[c * hw + y * w + x]);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("PPM write failed");
}

Tensor read_ppm(std::istream& in) {
  std::size_t w = 0, h = 0;
  read_header(in, "P6", w, h);
  std::vector<unsigned char> bytes = read_bytes(in, w * h * 3);
  Tensor image({3, h, w});
  const std::size_t hw = h * w;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        image[c * hw + y * w + x] = bytes[(y * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return image;
}

void write_pgm(std::ostream& out, const Tensor& mask) {
  if (mask.rank() != 2) {
    throw ShapeError("write_pgm expects [H x W], got " +
                     shape_to_string(mask.shape()));
  }
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    double v = mask[i];
    long id = std::lround(v);
    if (id < 0 || id > 255 || v != static_cast<double>(id)) {
      throw DataError("write_pgm: mask value " + std::to_string(v) +
                      " is not a byte class id");
    }
    bytes[i] = static_cast<unsigned char>(id);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("PGM write failed");
}

Tensor read_pgm(std::istream& in) {
  std::size_t w = 0, h = 0;
  read_header(in, "P5", w, h);
  std::vector<unsigned char> bytes = read_bytes(in, w * h);
  Tensor mask({h, w});
  for (std::size_t i = 0; i < h * w; ++i) mask[i] = static_cast<double>(bytes[i]);
  return mask;
}

namespace {

template <typename Fn>
void save_file(const std::string& path, Fn&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  writer(out);
}

template <typename Fn>
Tensor load_file(const std::string& path, Fn&& reader) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  try {
    return reader(in);
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in " + path);
  }
}

}  // namespace

void save_ppm(const std::string& path, const Tensor& image) {
  save_file(path, [&](std::ostream& out) { write_ppm(out, image); });
}

Tensor load_ppm(const std::string& path) {
  return load_file(path, [](std::istream& in) { return read_ppm(in); });
}

void save_pgm(const std::string& path, const Tensor& mask) {
  save_file(path, [&](std::ostream& out) { write_pgm(out, mask); });
}

Tensor load_pgm(const std::string& path) {
  return load_file(path, [](std::istream& in) { return read_pgm(in); });
}

}  // namespace langseg
