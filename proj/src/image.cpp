#include "ferfusion/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "ferfusion/error.hpp"
#include "ferfusion/io.hpp"

namespace ferfusion {

ImageBuffer::ImageBuffer(std::size_t height, std::size_t width, std::size_t channels, std::uint8_t fill)
    : ImageBuffer(height, width, channels, std::vector<std::uint8_t>(height * width * channels, fill)) {}

ImageBuffer::ImageBuffer(std::size_t height, std::size_t width, std::size_t channels,
                         std::vector<std::uint8_t> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height == 0 || width == 0) throw Error(ErrorKind::InvalidArgument, "image dimensions must be >= 1");
  if (channels != 1 && channels != 3) throw Error(ErrorKind::InvalidArgument, "image channels must be 1 or 3");
  if (data_.size() != height * width * channels) {
    throw Error(ErrorKind::ShapeMismatch, "image data length does not match height*width*channels");
  }
}

namespace {

double source_coord(std::size_t i, std::size_t in, std::size_t out) {
  if (out == 1 || in == 1) return 0.0;
  return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

std::uint8_t to_u8(double v) {
  const double r = std::round(v);  // half away from zero
  if (r <= 0.0) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

}  // namespace

ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw Error(ErrorKind::InvalidArgument, "resize target must be >= 1");
  if (out_h == img.height() && out_w == img.width()) return img;

  const std::size_t ch = img.channels();
  ImageBuffer out(out_h, out_w, ch);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = source_coord(y, img.height(), out_h);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = source_coord(x, img.width(), out_w);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < ch; ++c) {
        const double top = (1.0 - tx) * img.at(y0, x0, c) + tx * img.at(y0, x1, c);
        const double bottom = (1.0 - tx) * img.at(y1, x0, c) + tx * img.at(y1, x1, c);
        out.at(y, x, c) = to_u8((1.0 - ty) * top + ty * bottom);
      }
    }
  }
  return out;
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

ImageBuffer read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open image " + path.string());

  const std::string magic = next_token(in);
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw Error(ErrorKind::Parse, "unsupported image format in " + path.string());
  }
  std::size_t width = 0, height = 0, maxval = 0;
  try {
    width = std::stoul(next_token(in));
    height = std::stoul(next_token(in));
    maxval = std::stoul(next_token(in));
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, "malformed image header in " + path.string());
  }
  if (maxval != 255 || width == 0 || height == 0) {
    throw Error(ErrorKind::Parse, "unsupported image header in " + path.string());
  }
  std::vector<std::uint8_t> data(width * height * channels);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) {
    throw Error(ErrorKind::Parse, "truncated image data in " + path.string());
  }
  return ImageBuffer(height, width, channels, std::move(data));
}

void write_pnm(const std::filesystem::path& path, const ImageBuffer& img) {
  std::ostringstream out;
  out << (img.channels() == 1 ? "P5" : "P6") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data().data()), static_cast<std::streamsize>(img.data().size()));
  write_file_atomic(path, out.str());
}

}  // namespace ferfusion
