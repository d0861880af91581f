#include "famed/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "famed/file_util.hpp"

namespace famed {

namespace {

std::string lower_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return {};
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext;
}

std::uint8_t to_byte(Scalar v) {
  const Scalar c = std::clamp(v, Scalar{0}, Scalar{1}) * Scalar{255};
  return static_cast<std::uint8_t>(std::lround(c));
}

Tensor from_interleaved(const std::vector<std::uint8_t>& px, int h, int w, int channels) {
  Tensor t(Shape{1, channels, h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    Scalar* d = t.plane(0, c);
    for (std::size_t p = 0; p < hw; ++p) d[p] = px[p * channels + c] / 255.0f;
  }
  return t;
}

std::vector<std::uint8_t> to_interleaved(const Tensor& t) {
  const int channels = t.c();
  const std::size_t hw = t.shape().plane();
  std::vector<std::uint8_t> px(hw * channels);
  for (int c = 0; c < channels; ++c) {
    const Scalar* s = t.plane(0, c);
    for (std::size_t p = 0; p < hw; ++p) px[p * channels + c] = to_byte(s[p]);
  }
  return px;
}

Tensor read_png(const std::string& path, int channels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("cannot read PNG '" + path + "': " + image.message);
  }
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG '" + path + "': " + msg);
  }
  return from_interleaved(px, static_cast<int>(image.height), static_cast<int>(image.width),
                          channels);
}

// P6 header: magic, width, height, maxval separated by whitespace, comments
// introduced by '#'.
Tensor read_ppm(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 2;
  auto fail = [&](const std::string& what) -> Tensor {
    throw std::runtime_error("cannot read PPM '" + path + "': " + what);
  };
  auto next_int = [&]() -> long {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) return -1;
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1L << 24)) return -1;
    }
    return v;
  };
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (w <= 0 || h <= 0) return fail("bad dimensions");
  if (maxval != 255) return fail("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) return fail("malformed header");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < need) return fail("truncated pixel data");
  std::vector<std::uint8_t> px(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                               bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return from_interleaved(px, static_cast<int>(h), static_cast<int>(w), 3);
}

Tensor load_any(const std::string& path, int channels) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) {
    return read_png(path, channels);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    Tensor rgb = read_ppm(path, bytes);
    return channels == 3 ? rgb : rgb.channels(0, 1);
  }
  throw std::runtime_error("unsupported image format in '" + path +
                           "' (expected 8-bit PNG or binary PPM)");
}

}  // namespace

Tensor load_image(const std::string& path) { return load_any(path, 3); }

Tensor load_gray(const std::string& path) { return load_any(path, 1); }

Tensor quantize8(const Tensor& image) {
  Tensor q(image.shape());
  for (std::size_t i = 0; i < image.numel(); ++i) q[i] = to_byte(image[i]) / 255.0f;
  return q;
}

void save_image(const Tensor& image, const std::string& path) {
  if (image.n() != 1 || (image.c() != 3 && image.c() != 1)) {
    throw std::invalid_argument("save_image: expected [1,3,h,w] or [1,1,h,w], got " +
                                image.shape().str());
  }
  const std::vector<std::uint8_t> px = to_interleaved(image);
  const std::string ext = lower_extension(path);
  if (ext == "ppm") {
    if (image.c() != 3) throw std::invalid_argument("save_image: PPM output needs 3 channels");
    std::string out = "P6\n" + std::to_string(image.w()) + " " + std::to_string(image.h()) +
                      "\n255\n";
    out.append(reinterpret_cast<const char*>(px.data()), px.size());
    write_file_atomic(path, out);
    return;
  }
  if (ext != "png") {
    throw std::invalid_argument("save_image: unsupported extension for '" + path +
                                "' (use .png or .ppm)");
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.w());
  img.height = static_cast<png_uint_32>(image.h());
  img.format = image.c() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, px.data(), 0, nullptr)) {
    throw std::runtime_error("cannot encode PNG for '" + path + "': " + img.message);
  }
  std::string buffer(size, '\0');
  if (!png_image_write_to_memory(&img, buffer.data(), &size, 0, px.data(), 0, nullptr)) {
    throw std::runtime_error("cannot encode PNG for '" + path + "': " + img.message);
  }
  buffer.resize(size);
  write_file_atomic(path, buffer);
}

}  // namespace famed
