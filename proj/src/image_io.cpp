#include "gradmod/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "gradmod/checkpoint.hpp"

namespace gradmod {

namespace {

constexpr double kMax16 = 65535.0;

// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.get();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else if (c != EOF) {
      tok.push_back(static_cast<char>(c));
    }
  }
  return tok;
}

}  // namespace

void write_image(const Tensor& image, const std::filesystem::path& path) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw ShapeError("write_image expects [3 x H x W], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> bytes;
  bytes.reserve(h * w * 6);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = image[(c * h + y) * w + x];
        if (!std::isfinite(v)) throw std::invalid_argument("write_image: non-finite pixel value");
        const auto q = static_cast<unsigned>(std::lround((std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * kMax16));
        bytes.push_back(static_cast<unsigned char>(q >> 8));
        bytes.push_back(static_cast<unsigned char>(q & 0xff));
      }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << w << ' ' << h << "\n65535\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (token(in) != "P6") throw IoError(path.string() + " is not a binary PPM");
  std::size_t w = 0, h = 0;
  unsigned maxval = 0;
  try {
    w = std::stoul(token(in));
    h = std::stoul(token(in));
    maxval = static_cast<unsigned>(std::stoul(token(in)));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw IoError(path.string() + ": unsupported PPM header");
  const std::size_t bps = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> bytes(w * h * 3 * bps);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError(path.string() + ": truncated pixel data");
  std::vector<double> v(3 * h * w);
  for (std::size_t i = 0; i < h * w * 3; ++i) {
    const unsigned q = bps == 2 ? (bytes[2 * i] << 8) | bytes[2 * i + 1] : bytes[i];
    const std::size_t pix = i / 3, c = i % 3;
    v[c * h * w + pix] = static_cast<double>(q) / maxval * 2.0 - 1.0;
  }
  return Tensor({3, h, w}, std::move(v));
}

}  // namespace gradmod
