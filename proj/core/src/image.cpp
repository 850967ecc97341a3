#include "maxim/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

namespace maxim {

namespace {
// PPM allows comments between header tokens.
int next_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok += ch;
  }
  if (tok.empty()) throw IoError("ppm: truncated header");
  return std::stoi(tok);
}
}  // namespace

Tensor load_ppm(const std::string& path, DType dt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image file: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6')
    throw IoError("unsupported image format in " + path + " (binary RGB pixmap P6 required)");
  int w = next_token(in);
  int h = next_token(in);
  int maxval = next_token(in);
  if (w < 1 || h < 1) throw IoError("ppm: bad extents in " + path);
  if (maxval != 255) throw IoError("ppm: only 8-bit (maxval 255) images supported: " + path);
  std::vector<unsigned char> bytes(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError("ppm: truncated pixel data in " + path);
  Tensor t = Tensor::zeros({1, h, w, 3}, dt);
  dispatch_dtype(dt, [&](auto tag) {
    using T = decltype(tag);
    auto p = t.raw_mutable<T>();
    for (size_t i = 0; i < bytes.size(); ++i) p[i] = static_cast<T>(bytes[i] / 255.0);
  });
  return t;
}

void save_ppm(const Tensor& img, const std::string& path) {
  if (img.rank() != 4 || img.dim(0) != 1 || img.dim(3) != 3)
    throw IoError("save_ppm: expected [1,H,W,3]");
  int64_t h = img.dim(1), w = img.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image file: " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<size_t>(h) * w * 3);
  for (int64_t i = 0; i < img.numel(); ++i) {
    double v = std::clamp(img.at(i), 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write: " + path);
}

}  // namespace maxim
