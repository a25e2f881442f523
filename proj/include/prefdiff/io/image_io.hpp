#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prefdiff/world.hpp"

namespace prefdiff::io {

struct RgbCanvas {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

RgbCanvas to_canvas(const RenderedImage& image);

/// Tiles images left to right, top to bottom, with a grey gutter.
RgbCanvas contact_sheet(const std::vector<RenderedImage>& images, int columns, int gutter = 2);

/// Binary PPM (P6); `comment` lines go into the header.
std::string encode_ppm(const RgbCanvas& canvas, const std::string& comment = {});
void write_ppm(const std::filesystem::path& path, const RgbCanvas& canvas, const std::string& comment = {});

RgbCanvas decode_ppm(const std::string& bytes);

}  // namespace prefdiff::io
