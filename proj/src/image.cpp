#include "negmine/image.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <iterator>

#include <fmt/core.h>

namespace negmine {

Image::Image(int w, int h, std::uint8_t fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) {
    throw std::invalid_argument(fmt::format("image dims {}x{} must be positive", w, h));
  }
  pixels.assign(static_cast<std::size_t>(w) * h, fill);
}

Image::Image(int w, int h, std::vector<std::uint8_t> px)
    : width(w), height(h), pixels(std::move(px)) {
  if (w <= 0 || h <= 0) {
    throw std::invalid_argument(fmt::format("image dims {}x{} must be positive", w, h));
  }
  if (pixels.size() != static_cast<std::size_t>(w) * h) {
    throw std::invalid_argument(fmt::format(
        "image {}x{} needs {} pixels, got {}", w, h,
        static_cast<std::size_t>(w) * h, pixels.size()));
  }
}

Image equalize_histogram(const Image& img) {
  std::array<std::uint64_t, 256> cdf{};
  for (std::uint8_t v : img.pixels) ++cdf[v];
  for (std::size_t i = 1; i < cdf.size(); ++i) cdf[i] += cdf[i - 1];

  const std::uint64_t total = img.pixels.size();
  std::uint64_t cdf_min = 0;
  for (std::uint64_t c : cdf) {
    if (c > 0) {
      cdf_min = c;
      break;
    }
  }
  const std::uint64_t denom = total - cdf_min;
  if (denom == 0) return img;

  // round(x) with x = (cdf - cdf_min) * 255 / denom, half rounded up, in
  // integer arithmetic.
  std::array<std::uint8_t, 256> lut{};
  for (std::size_t v = 0; v < 256; ++v) {
    const std::uint64_t num = cdf[v] >= cdf_min ? cdf[v] - cdf_min : 0;
    lut[v] = static_cast<std::uint8_t>((2 * num * 255 + denom) / (2 * denom));
  }
  Image out = img;
  for (auto& p : out.pixels) p = lut[p];
  return out;
}

Tensor preprocess(const Image& img) {
  const Image eq = equalize_histogram(img);
  Tensor t(Shape{1, 1, img.height, img.width});
  for (std::size_t i = 0; i < eq.pixels.size(); ++i) {
    t[i] = eq.pixels[i] / 255.0;
  }
  return t;
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) return Tensor(Shape{0, 1, 0, 0});
  const Shape first = images.front().shape();
  Tensor out(Shape{static_cast<int>(images.size()), first.c, first.h, first.w});
  const std::size_t per = first.numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != first) {
      throw ShapeError(fmt::format("stack_images: image {} has shape {}, expected {}",
                                   i, to_string(images[i].shape()), to_string(first)));
    }
    std::copy(images[i].data().begin(), images[i].data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

// ---------------------------------------------------------------- PGM I/O

namespace {

const char* kind_name(PgmError::Kind k) {
  switch (k) {
    case PgmError::Kind::unsupported_format: return "unsupported format";
    case PgmError::Kind::malformed_header: return "malformed header";
    case PgmError::Kind::truncated_payload: return "truncated payload";
    case PgmError::Kind::io: return "i/o error";
  }
  return "error";
}

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_int(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) {
        throw PgmError(PgmError::Kind::malformed_header, start,
                       fmt::format("{} out of range", field));
      }
      ++pos_;
    }
    if (pos_ == start) {
      throw PgmError(PgmError::Kind::malformed_header, start,
                     fmt::format("expected {}", field));
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates the header from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw PgmError(PgmError::Kind::malformed_header, pos_,
                     "expected whitespace after maxval");
    }
    ++pos_;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

PgmError::PgmError(Kind kind, std::size_t offset, const std::string& detail)
    : std::runtime_error(
          fmt::format("pgm {} at byte {}: {}", kind_name(kind), offset, detail)),
      kind_(kind),
      offset_(offset) {}

Image decode_pgm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw PgmError(PgmError::Kind::unsupported_format, 0, "missing 'P' magic");
  }
  if (bytes[1] != '5') {
    throw PgmError(PgmError::Kind::unsupported_format, 1,
                   fmt::format("magic P{} is not binary graymap P5",
                               static_cast<char>(bytes[1])));
  }
  HeaderReader reader(bytes);
  if (reader.pos() >= bytes.size() || !std::isspace(bytes[reader.pos()])) {
    throw PgmError(PgmError::Kind::malformed_header, 2,
                   "expected whitespace after magic");
  }
  const std::size_t width_at = reader.pos();
  const int width = reader.read_int("width");
  const int height = reader.read_int("height");
  const std::size_t maxval_at = reader.pos();
  const int maxval = reader.read_int("maxval");
  if (width <= 0 || height <= 0) {
    throw PgmError(PgmError::Kind::malformed_header, width_at,
                   fmt::format("dims {}x{} must be positive", width, height));
  }
  if (maxval != 255) {
    throw PgmError(PgmError::Kind::unsupported_format, maxval_at,
                   fmt::format("maxval {} (only 255 supported)", maxval));
  }
  reader.single_space();
  const std::size_t start = reader.pos();
  const std::size_t need = static_cast<std::size_t>(width) * height;
  if (bytes.size() - start < need) {
    throw PgmError(PgmError::Kind::truncated_payload, bytes.size(),
                   fmt::format("raster needs {} bytes from offset {}, file has {}",
                               need, start, bytes.size() - start));
  }
  return Image(width, height,
               std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                                         bytes.begin() + static_cast<std::ptrdiff_t>(start + need)));
}

std::vector<std::uint8_t> encode_pgm(const Image& img) {
  const std::string header = fmt::format("P5\n{} {}\n255\n", img.width, img.height);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw PgmError(PgmError::Kind::io, 0, "cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_pgm(bytes);
}

void save_image(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw PgmError(PgmError::Kind::io, 0, "cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw PgmError(PgmError::Kind::io, 0, "short write to " + path.string());
  }
}

}  // namespace negmine
