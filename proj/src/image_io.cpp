#include "ctiunet/image_io.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ctiunet/errors.hpp"

namespace ctiunet {
namespace {

constexpr std::size_t kSignatureSize = 8;

std::uint32_t read_be32(const std::string& b, std::size_t at) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3]));
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Collects tEXt keyword/value pairs by walking the chunk list.
std::map<std::string, std::string> text_chunks(const std::string& bytes) {
  std::map<std::string, std::string> out;
  std::size_t pos = kSignatureSize;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = read_be32(bytes, pos);
    const std::string type = bytes.substr(pos + 4, 4);
    if (pos + 12 + len > bytes.size()) break;
    if (type == "tEXt") {
      const std::string data = bytes.substr(pos + 8, len);
      const auto nul = data.find('\0');
      if (nul != std::string::npos) out[data.substr(0, nul)] = data.substr(nul + 1);
    }
    if (type == "IEND") break;
    pos += 12 + len;
  }
  return out;
}

std::string text_chunk(const std::string& key, const std::string& value) {
  std::string body = "tEXt" + key;
  body.push_back('\0');
  body += value;
  std::string chunk;
  put_be32(chunk, static_cast<std::uint32_t>(body.size() - 4));
  chunk += body;
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
            static_cast<uInt>(body.size())));
  put_be32(chunk, crc);
  return chunk;
}

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError(LoadErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  const std::string bytes = buf.str();

  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw LoadError(LoadErrorKind::kIo,
                    path.string() + ": " + std::string(img.message));
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = color ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw LoadError(LoadErrorKind::kIo, path.string() + ": " + msg);
  }
  out.text = text_chunks(bytes);
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ConfigError("PNG output supports 1 or 3 channels");
  }
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw ConfigError("pixel buffer does not match image extents");
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0,
                                 nullptr)) {
    throw ConfigError("PNG encode failed: " + std::string(img.message));
  }
  std::string encoded(size, '\0');
  if (!png_image_write_to_memory(&img, encoded.data(), &size, 0,
                                 image.pixels.data(), 0, nullptr)) {
    throw ConfigError("PNG encode failed: " + std::string(img.message));
  }
  encoded.resize(size);

  // Text chunks go right after IHDR (signature + 25-byte IHDR chunk).
  std::string text;
  for (const auto& [k, v] : image.text) text += text_chunk(k, v);
  encoded.insert(kSignatureSize + 25, text);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path.string());
  os.write(encoded.data(), static_cast<std::streamsize>(encoded.size()));
  if (!os) throw ConfigError("short write to " + path.string());
}

Tensor4 image_to_tensor(const Image8& image) {
  Tensor4 t({1, image.channels, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c)
        t.at(0, c, y, x) =
            image.pixels[(y * image.width + x) * image.channels + c] / 255.0;
  return t;
}

Image8 tensor_to_image(const Tensor4& tensor) {
  const Shape s = tensor.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) {
    throw ConfigError("cannot encode tensor " + s.str() + " as an image");
  }
  Image8 img;
  img.width = s.w;
  img.height = s.h;
  img.channels = s.c;
  img.pixels.resize(s.count());
  for (std::size_t y = 0; y < s.h; ++y)
    for (std::size_t x = 0; x < s.w; ++x)
      for (std::size_t c = 0; c < s.c; ++c) {
        const double v = std::clamp(tensor.at(0, c, y, x), 0.0, 1.0);
        img.pixels[(y * s.w + x) * s.c + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

}  // namespace ctiunet
