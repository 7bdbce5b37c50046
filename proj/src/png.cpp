#include "casediag/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "casediag/errors.hpp"

namespace casediag::png {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
  put_u32(out, std::uint32_t(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const std::uint32_t crc =
      std::uint32_t(crc32(0, out.data() + crc_start, uInt(out.size() - crc_start)));
  put_u32(out, crc);
}

void write_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
               int width, int height, int channels) {
  if (width < 1 || height < 1 || pixels.size() != std::size_t(width) * height * channels)
    throw ParameterError("png: pixel buffer does not match " + std::to_string(width) + "x" +
                         std::to_string(height));
  // raw scanlines, each prefixed with filter byte 0
  const std::size_t stride = std::size_t(width) * channels;
  std::vector<std::uint8_t> raw((stride + 1) * height);
  for (int y = 0; y < height; ++y) {
    raw[y * (stride + 1)] = 0;
    std::memcpy(raw.data() + y * (stride + 1) + 1, pixels.data() + y * stride, stride);
  }
  uLongf comp_size = compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> comp(comp_size);
  if (compress2(comp.data(), &comp_size, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw FileError("png: deflate failed for " + path.string());
  comp.resize(comp_size);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, std::uint32_t(width));
  put_u32(ihdr, std::uint32_t(height));
  ihdr.push_back(8);                                   // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);               // grayscale / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileError("png: cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  if (!f) throw FileError("png: write failed for " + path.string());
}

}  // namespace

void write_gray8(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                 int width, int height) {
  write_png(path, pixels, width, height, 1);
}

void write_rgb8(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb,
                int width, int height) {
  write_png(path, rgb, width, height, 3);
}

}  // namespace casediag::png
