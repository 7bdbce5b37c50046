#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace casediag::png {

/// Writes an 8-bit grayscale PNG (row-major, top row first).
void write_gray8(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                 int width, int height);

/// Writes an 8-bit RGB PNG (interleaved, row-major).
void write_rgb8(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb,
                int width, int height);

}  // namespace casediag::png
