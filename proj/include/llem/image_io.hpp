#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "llem/tensor.hpp"

namespace llem {

/// Reads an 8-bit RGB PNG; values are byte / 255. Other bit depths, palettes,
/// alpha and grayscale are rejected with FormatError.
Image load_image(const std::filesystem::path& path);
Image decode_png(std::span<const std::uint8_t> bytes);

/// Writes an 8-bit RGB PNG after clamp01 and round(v * 255).
void save_image(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& image);

/// Quantization used by save_image, exposed for tests.
std::vector<std::uint8_t> quantize_rgb8(const Image& image);

}  // namespace llem
