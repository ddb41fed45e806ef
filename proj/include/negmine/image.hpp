#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "negmine/tensor.hpp"

namespace negmine {

/// 8-bit single-channel image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0);
  Image(int w, int h, std::vector<std::uint8_t> px);

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

/// Global per-image histogram equalization over 256 levels.
/// Constant images are returned unchanged.
Image equalize_histogram(const Image& img);

/// Equalize, then scale to [0, 1] as a (1, 1, H, W) tensor.
Tensor preprocess(const Image& img);

/// Copies `images` (all the same size) into one (N, 1, H, W) tensor.
Tensor stack_images(const std::vector<Tensor>& images);

// ---------------------------------------------------------------- PGM I/O

class PgmError : public std::runtime_error {
 public:
  enum class Kind { unsupported_format, malformed_header, truncated_payload, io };

  PgmError(Kind kind, std::size_t offset, const std::string& detail);

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

/// Parses a binary P5 graymap with maxval 255.
Image decode_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm(const Image& img);

Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

}  // namespace negmine
