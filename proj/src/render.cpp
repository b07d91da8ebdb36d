#include "cubes/render.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace cubes::render {

namespace {

struct Bounds {
  int min_x = std::numeric_limits<int>::max();
  int min_y = std::numeric_limits<int>::max();
  int max_x = std::numeric_limits<int>::min();
  int max_y = std::numeric_limits<int>::min();

  int width_cells() const { return max_x - min_x + 3; }  // 1-cell margin
  int height_cells() const { return max_y - min_y + 3; }
};

Bounds trace_bounds(const std::vector<io::TraceRecord>& trace) {
  Bounds b;
  for (const io::TraceRecord& rec : trace)
    for (CellCoord c : rec.coords_after) {
      b.min_x = std::min(b.min_x, c.x);
      b.min_y = std::min(b.min_y, c.y);
      b.max_x = std::max(b.max_x, c.x);
      b.max_y = std::max(b.max_y, c.y);
    }
  return b;
}

// Lattice y grows upward, image y downward.
int cell_px_x(const Bounds& b, int px, CellCoord c) {
  return (c.x - b.min_x + 1) * px;
}
int cell_px_y(const Bounds& b, int px, CellCoord c) {
  return (b.max_y - c.y + 1) * px;
}

const char* kFillCube = "#4878a8";
const char* kFillMoved = "#e2a03c";
const char* kStroke = "#1c3144";

std::string svg_frame(const io::TraceRecord& rec, const Bounds& b,
                      const RenderOptions& opt) {
  const int px = opt.cell_px;
  const int w = b.width_cells() * px;
  const int h = b.height_cells() * px;
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
       std::to_string(w) + "\" height=\"" + std::to_string(h) +
       "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
       "\">\n";
  s += "<rect width=\"" + std::to_string(w) + "\" height=\"" +
       std::to_string(h) + "\" fill=\"#ffffff\"/>\n";
  for (int gx = 0; gx <= b.width_cells(); ++gx)
    s += "<line x1=\"" + std::to_string(gx * px) + "\" y1=\"0\" x2=\"" +
         std::to_string(gx * px) + "\" y2=\"" + std::to_string(h) +
         "\" stroke=\"#e4e4e4\" stroke-width=\"1\"/>\n";
  for (int gy = 0; gy <= b.height_cells(); ++gy)
    s += "<line x1=\"0\" y1=\"" + std::to_string(gy * px) + "\" x2=\"" +
         std::to_string(w) + "\" y2=\"" + std::to_string(gy * px) +
         "\" stroke=\"#e4e4e4\" stroke-width=\"1\"/>\n";
  for (int i = 0; i < int(rec.coords_after.size()); ++i) {
    const CellCoord c = rec.coords_after[size_t(i)];
    const int x = cell_px_x(b, px, c);
    const int y = cell_px_y(b, px, c);
    const char* fill = (i == rec.cube) ? kFillMoved : kFillCube;
    s += "<rect x=\"" + std::to_string(x + 1) + "\" y=\"" +
         std::to_string(y + 1) + "\" width=\"" + std::to_string(px - 2) +
         "\" height=\"" + std::to_string(px - 2) + "\" rx=\"2\" fill=\"" +
         fill + "\" stroke=\"" + kStroke + "\" stroke-width=\"2\"/>\n";
    if (opt.labels)
      s += "<text x=\"" + std::to_string(x + px / 2) + "\" y=\"" +
           std::to_string(y + px / 2 + px / 6) +
           "\" font-family=\"monospace\" font-size=\"" +
           std::to_string(px / 2) +
           "\" text-anchor=\"middle\" fill=\"#ffffff\">" + std::to_string(i) +
           "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

void append_u16(std::string& out, int v) {
  out.push_back(char(uint8_t(v & 0xFF)));
  out.push_back(char(uint8_t((v >> 8) & 0xFF)));
}

// GIF-variant LZW: variable-width codes starting one bit above the pixel
// depth, dictionary reset via clear codes when the 12-bit space fills up.
void lzw_compress(const std::vector<uint8_t>& px, int min_code,
                  std::string& out) {
  const uint16_t clear = uint16_t(1) << min_code;
  const uint16_t eoi = uint16_t(clear + 1);
  std::vector<uint8_t> bytes;
  uint32_t acc = 0;
  int nbits = 0;
  auto put = [&](uint16_t code, int width) {
    acc |= uint32_t(code) << nbits;
    nbits += width;
    while (nbits >= 8) {
      bytes.push_back(uint8_t(acc & 0xFF));
      acc >>= 8;
      nbits -= 8;
    }
  };
  std::unordered_map<uint32_t, uint16_t> table;
  uint16_t next = uint16_t(eoi + 1);
  int width = min_code + 1;
  put(clear, width);
  uint16_t prefix = px[0];
  for (size_t i = 1; i < px.size(); ++i) {
    const uint32_t key = (uint32_t(prefix) << 8) | px[i];
    auto it = table.find(key);
    if (it != table.end()) {
      prefix = it->second;
      continue;
    }
    put(prefix, width);
    if (next == 4096) {
      put(clear, width);
      table.clear();
      next = uint16_t(eoi + 1);
      width = min_code + 1;
    } else {
      if (next == (uint16_t(1) << width)) ++width;
      table.emplace(key, next++);
    }
    prefix = px[i];
  }
  put(prefix, width);
  put(eoi, width);
  if (nbits > 0) bytes.push_back(uint8_t(acc & 0xFF));
  size_t pos = 0;
  while (pos < bytes.size()) {
    const size_t len = std::min<size_t>(255, bytes.size() - pos);
    out.push_back(char(uint8_t(len)));
    out.append(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
  }
  out.push_back('\0');
}

// Palette indices for the rasterized frames.
enum : uint8_t { kBg = 0, kCube = 1, kMoved = 2, kBorder = 3 };

std::vector<uint8_t> raster_frame(const io::TraceRecord& rec, const Bounds& b,
                                  int px) {
  const int w = b.width_cells() * px;
  const int h = b.height_cells() * px;
  std::vector<uint8_t> img(size_t(w) * size_t(h), kBg);
  const int t = std::max(1, px / 12);  // border ring thickness
  for (int i = 0; i < int(rec.coords_after.size()); ++i) {
    const CellCoord c = rec.coords_after[size_t(i)];
    const int x0 = cell_px_x(b, px, c);
    const int y0 = cell_px_y(b, px, c);
    const uint8_t fill = (i == rec.cube) ? kMoved : kCube;
    for (int y = y0; y < y0 + px; ++y)
      for (int x = x0; x < x0 + px; ++x) {
        const bool edge =
            y < y0 + t || y >= y0 + px - t || x < x0 + t || x >= x0 + px - t;
        img[size_t(y) * size_t(w) + size_t(x)] = edge ? kBorder : fill;
      }
  }
  return img;
}

}  // namespace

void validate_trace(const std::vector<io::TraceRecord>& trace) {
  if (trace.empty())
    throw std::runtime_error("render: trace has no records");
  if (trace.front().outcome != "init")
    throw std::runtime_error("render: trace must start with an init record");
  const size_t n = trace.front().coords_after.size();
  if (n == 0) throw std::runtime_error("render: init record has no cubes");
  for (const io::TraceRecord& rec : trace)
    if (rec.coords_after.size() != n)
      throw std::runtime_error("render: cube count changes mid-trace");
}

std::vector<std::string> write_svg_frames(
    const std::vector<io::TraceRecord>& trace, const std::string& out_dir,
    const RenderOptions& opt) {
  validate_trace(trace);
  std::filesystem::create_directories(out_dir);
  const Bounds b = trace_bounds(trace);
  std::vector<std::string> paths;
  paths.reserve(trace.size());
  for (size_t f = 0; f < trace.size(); ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.svg", f);
    std::string path = out_dir + "/" + name;
    io::atomic_write_file(path, svg_frame(trace[f], b, opt));
    paths.push_back(std::move(path));
  }
  return paths;
}

void write_gif(const std::vector<io::TraceRecord>& trace,
               const std::string& path, const RenderOptions& opt) {
  validate_trace(trace);
  const Bounds b = trace_bounds(trace);
  const int px = opt.cell_px;
  const int w = b.width_cells() * px;
  const int h = b.height_cells() * px;
  if (w > 0xFFFF || h > 0xFFFF)
    throw std::runtime_error("render: gif canvas exceeds 65535 pixels");

  std::string out;
  out += "GIF89a";
  append_u16(out, w);
  append_u16(out, h);
  // global color table present, 8-bit color resolution, 4 entries
  out.push_back(char(uint8_t(0xF1)));
  out.push_back('\0');  // background color index
  out.push_back('\0');  // pixel aspect ratio
  const uint8_t palette[4][3] = {
      {0xFF, 0xFF, 0xFF},  // background
      {0x48, 0x78, 0xA8},  // cube
      {0xE2, 0xA0, 0x3C},  // cube moved this step
      {0x1C, 0x31, 0x44},  // border
  };
  for (const auto& rgb : palette)
    for (uint8_t ch : rgb) out.push_back(char(ch));
  // Netscape looping extension (loop forever)
  const char loop_ext[] = "\x21\xFF\x0BNETSCAPE2.0\x03\x01\x00\x00\x00";
  out.append(loop_ext, sizeof(loop_ext) - 1);

  for (const io::TraceRecord& rec : trace) {
    // graphic control: keep previous frame, fixed delay, no transparency
    out += "\x21\xF9\x04\x04";
    append_u16(out, opt.delay_cs);
    out.push_back('\0');
    out.push_back('\0');
    out.push_back('\x2C');  // image descriptor, full canvas, no local table
    append_u16(out, 0);
    append_u16(out, 0);
    append_u16(out, w);
    append_u16(out, h);
    out.push_back('\0');
    out.push_back('\x02');  // LZW minimum code size for the 4-color palette
    lzw_compress(raster_frame(rec, b, px), 2, out);
  }
  out.push_back('\x3B');  // trailer
  io::atomic_write_file(path, out);
}

}  // namespace cubes::render
