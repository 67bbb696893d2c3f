#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "vamkit/tensor.hpp"

namespace vamkit {

/// 8-bit binary PPM (P6) from a (1, 3, H, W) tensor in [0, 1].
std::string encode_ppm(const Tensor& image);
/// 8-bit binary PGM (P5) from a (1, 1, H, W) tensor in [0, 1].
std::string encode_pgm(const Tensor& mask);

/// Decoded values are byte / 255. `source` names the file in error messages.
Tensor decode_ppm(std::string_view bytes, std::string_view source);
Tensor decode_pgm(std::string_view bytes, std::string_view source);

std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace vamkit
