#include "prefdiff/io/image_io.hpp"

#include <sstream>

#include "prefdiff/io/checkpoint.hpp"

namespace prefdiff::io {

RgbCanvas to_canvas(const RenderedImage& image) {
  return {RenderedImage::kWidth, RenderedImage::kHeight, image.pixels};
}

RgbCanvas contact_sheet(const std::vector<RenderedImage>& images, int columns, int gutter) {
  require(!images.empty(), "contact_sheet: no images");
  require(columns >= 1 && gutter >= 0, "contact_sheet: bad layout");
  const int n = static_cast<int>(images.size());
  const int cols = std::min(columns, n);
  const int rows = (n + cols - 1) / cols;
  const int w = RenderedImage::kWidth, h = RenderedImage::kHeight;
  RgbCanvas sheet;
  sheet.width = cols * w + (cols + 1) * gutter;
  sheet.height = rows * h + (rows + 1) * gutter;
  sheet.pixels.assign(static_cast<std::size_t>(sheet.width * sheet.height * 3), 128);
  for (int i = 0; i < n; ++i) {
    const int x0 = gutter + (i % cols) * (w + gutter);
    const int y0 = gutter + (i / cols) * (h + gutter);
    for (int y = 0; y < h; ++y) {
      const auto* src = images[static_cast<std::size_t>(i)].at(0, y);
      std::copy(src, src + w * 3, &sheet.pixels[static_cast<std::size_t>(((y0 + y) * sheet.width + x0) * 3)]);
    }
  }
  return sheet;
}

std::string encode_ppm(const RgbCanvas& canvas, const std::string& comment) {
  require(canvas.width > 0 && canvas.height > 0, "ppm: empty canvas");
  require(canvas.pixels.size() == static_cast<std::size_t>(canvas.width * canvas.height * 3), "ppm: pixel count mismatch");
  std::ostringstream out;
  out << "P6\n";
  std::istringstream lines(comment);
  for (std::string line; std::getline(lines, line);) out << "# " << line << "\n";
  out << canvas.width << " " << canvas.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(canvas.pixels.data()), static_cast<std::streamsize>(canvas.pixels.size()));
  return out.str();
}

void write_ppm(const std::filesystem::path& path, const RgbCanvas& canvas, const std::string& comment) {
  write_file(path, encode_ppm(canvas, comment));
}

RgbCanvas decode_ppm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw FormatError("not a binary PPM");
  auto next_int = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string skip;
      std::getline(in, skip);
      in >> std::ws;
    }
    int v = -1;
    if (!(in >> v)) throw FormatError("ppm: bad header");
    return v;
  };
  RgbCanvas c;
  c.width = next_int();
  c.height = next_int();
  if (next_int() != 255 || c.width <= 0 || c.height <= 0) throw FormatError("ppm: unsupported header");
  in.get();
  c.pixels.resize(static_cast<std::size_t>(c.width * c.height * 3));
  in.read(reinterpret_cast<char*>(c.pixels.data()), static_cast<std::streamsize>(c.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(c.pixels.size())) throw FormatError("ppm: truncated pixels");
  return c;
}

}  // namespace prefdiff::io
