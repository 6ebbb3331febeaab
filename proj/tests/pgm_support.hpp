#pragma once

// Minimal PGM (P5) reader written from the netpbm format description, kept
// separate from the writer it checks.

#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgan::testing {

struct PgmImage {
  std::size_t width = 0, height = 0, maxval = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

inline PgmImage read_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_number = [&] {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) throw std::runtime_error("pgm: expected a number at byte " + std::to_string(pos));
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw std::runtime_error("pgm: missing P5 magic");
  pos = 2;
  PgmImage img;
  img.width = read_number();
  img.height = read_number();
  img.maxval = read_number();
  if (img.maxval == 0 || img.maxval > 255) throw std::runtime_error("pgm: maxval must be 1..255 for byte samples");
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw std::runtime_error("pgm: no whitespace after maxval");
  }
  ++pos;
  if (bytes.size() - pos != img.width * img.height) {
    throw std::runtime_error("pgm: raster has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                             std::to_string(img.width * img.height));
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  for (auto p : img.pixels) {
    if (p > img.maxval) throw std::runtime_error("pgm: sample exceeds maxval");
  }
  return img;
}

}  // namespace cgan::testing
