#include <cstdint>

#include "bcensus/errors.hpp"
#include "bcensus/ingest.hpp"

namespace bcensus {

namespace {

void put_le(std::string& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

std::string encode_bmp(const PnmImage& image) {
  if (image.samples.size() != image.width * image.height * image.channels) {
    throw InvalidArgument("sample count does not match image dimensions");
  }
  const std::size_t row_bytes = (image.width * 3 + 3) & ~std::size_t{3};
  const std::size_t pixel_bytes = row_bytes * image.height;
  constexpr std::uint32_t kHeaderBytes = 14 + 40;

  std::string out;
  out.reserve(kHeaderBytes + pixel_bytes);
  out += "BM";
  put_le(out, static_cast<std::uint32_t>(kHeaderBytes + pixel_bytes), 4);
  put_le(out, 0, 4);
  put_le(out, kHeaderBytes, 4);
  put_le(out, 40, 4);
  put_le(out, static_cast<std::uint32_t>(image.width), 4);
  put_le(out, static_cast<std::uint32_t>(image.height), 4);  // positive: bottom-up rows
  put_le(out, 1, 2);
  put_le(out, 24, 2);
  put_le(out, 0, 4);
  put_le(out, static_cast<std::uint32_t>(pixel_bytes), 4);
  put_le(out, 2835, 4);
  put_le(out, 2835, 4);
  put_le(out, 0, 4);
  put_le(out, 0, 4);

  auto to8 = [&](std::uint16_t v) -> char {
    if (image.maxval == 255) return static_cast<char>(v);
    return static_cast<char>((static_cast<std::uint32_t>(v) * 255 + image.maxval / 2) / image.maxval);
  };
  for (std::size_t y = image.height; y-- > 0;) {
    const std::size_t row_start = out.size();
    for (std::size_t x = 0; x < image.width; ++x) {
      const std::size_t base = (y * image.width + x) * image.channels;
      if (image.channels == 1) {
        const char g = to8(image.samples[base]);
        out.append(3, g);
      } else {
        out.push_back(to8(image.samples[base + 2]));
        out.push_back(to8(image.samples[base + 1]));
        out.push_back(to8(image.samples[base]));
      }
    }
    out.append(row_bytes - (out.size() - row_start), '\0');
  }
  return out;
}

}  // namespace bcensus
