#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "icethick/error.hpp"
#include "icethick/groundtruth.hpp"

namespace icethick {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::vector<char>& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 32)) fail(std::string(what) + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail(std::string("missing ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size()) fail("missing raster");
    ++pos_;
    return pos_;
  }

  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw IoError(path_.string() + ": malformed PGM: " + msg);
  }

 private:
  const std::vector<char>& bytes_;
  const std::filesystem::path& path_;
};

}  // namespace

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  HeaderReader r(bytes, path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') r.fail("expected P5 magic");
  r.pos_ = 2;
  PgmImage img;
  img.width = r.number("width");
  img.height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (img.width == 0 || img.height == 0) r.fail("zero dimension");
  if (maxval == 0 || maxval > 65535) r.fail("maxval out of range");
  img.maxval = static_cast<std::uint16_t>(maxval);
  const std::size_t start = r.raster_start();
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t n = img.width * img.height;
  if (bytes.size() - start < n * bpp) r.fail("truncated raster");
  img.pixels.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start);
  for (std::size_t i = 0; i < n; ++i) {
    img.pixels[i] = bpp == 1 ? p[i]
                             : static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
    if (img.pixels[i] > maxval) r.fail("pixel exceeds maxval");
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const PgmImage& image) {
  if (image.pixels.size() != image.width * image.height)
    throw DimensionError("write_pgm: pixel count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  out << "P5\n" << image.width << " " << image.height << "\n" << image.maxval << "\n";
  std::vector<char> raster;
  if (image.maxval <= 255) {
    raster.reserve(image.pixels.size());
    for (const auto v : image.pixels) raster.push_back(static_cast<char>(v));
  } else {
    raster.reserve(2 * image.pixels.size());
    for (const auto v : image.pixels) {
      raster.push_back(static_cast<char>(v >> 8));
      raster.push_back(static_cast<char>(v & 0xff));
    }
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

LayerMask read_mask(const std::filesystem::path& path) {
  const PgmImage img = read_pgm(path);
  if (img.maxval > 255) throw IoError(path.string() + ": mask must be 8-bit");
  return LayerMask(img.height, img.width, std::vector<std::uint8_t>(img.pixels.begin(), img.pixels.end()));
}

void write_mask(const std::filesystem::path& path, const LayerMask& mask) {
  write_pgm(path, PgmImage{mask.height, mask.width, 255,
                           std::vector<std::uint16_t>(mask.labels.begin(), mask.labels.end())});
}

GrayImage read_image(const std::filesystem::path& path) {
  const PgmImage img = read_pgm(path);
  GrayImage out{img.height, img.width, std::vector<float>(img.pixels.size())};
  const double scale = 1.0 / img.maxval;
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.values[i] = static_cast<float>(img.pixels[i] * scale);
  return out;
}

void write_image(const std::filesystem::path& path, const GrayImage& image) {
  PgmImage img{image.height, image.width, 65535, std::vector<std::uint16_t>(image.values.size())};
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image.values[i]), 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  write_pgm(path, img);
}

}  // namespace icethick
