#include "cubes/grid_image.hpp"

#include <algorithm>
#include <stdexcept>

namespace cubes::sim {

namespace {

GridImage render_impl(const std::vector<CellCoord>& cells, const int* indices,
                      int canvas_side) {
  if (cells.empty()) throw std::invalid_argument("render: no cells");
  int minx = cells[0].x, maxx = cells[0].x, miny = cells[0].y, maxy = cells[0].y;
  for (CellCoord c : cells) {
    minx = std::min(minx, c.x);
    maxx = std::max(maxx, c.x);
    miny = std::min(miny, c.y);
    maxy = std::max(maxy, c.y);
  }
  int w = maxx - minx + 1, h = maxy - miny + 1;
  if (w > canvas_side || h > canvas_side)
    throw std::invalid_argument("render: ensemble does not fit the canvas");
  GridImage img;
  img.side = canvas_side;
  img.origin = {minx - (canvas_side - w) / 2, miny - (canvas_side - h) / 2};
  img.binary.assign(size_t(canvas_side) * canvas_side, 0);
  img.index.assign(size_t(canvas_side) * canvas_side, -1);
  for (size_t i = 0; i < cells.size(); ++i) {
    int x = cells[i].x - img.origin.x, y = cells[i].y - img.origin.y;
    img.bin(x, y) = 1;
    img.idx(x, y) = indices ? indices[i] : int(i);
  }
  return img;
}

}  // namespace

GridImage render_images(const Ensemble& e, int canvas_side) {
  return render_impl(e.coords(), nullptr, canvas_side);
}

GridImage render_cells(const std::vector<CellCoord>& cells, int canvas_side) {
  return render_impl(cells, nullptr, canvas_side);
}

GridImage rotate90_ccw(const GridImage& img) {
  GridImage out;
  out.side = img.side;
  out.origin = img.origin;  // origin loses meaning after an in-place rotation
  out.binary.assign(img.binary.size(), 0);
  out.index.assign(img.index.size(), -1);
  const int n = img.side;
  // (x, y) -> (n-1-y, x): the +x axis maps onto +y
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      out.bin(n - 1 - y, x) = img.bin(x, y);
      out.idx(n - 1 - y, x) = img.idx(x, y);
    }
  return out;
}

GridImage mirror_horizontal(const GridImage& img) {
  GridImage out;
  out.side = img.side;
  out.origin = img.origin;
  out.binary.assign(img.binary.size(), 0);
  out.index.assign(img.index.size(), -1);
  const int n = img.side;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      out.bin(n - 1 - x, y) = img.bin(x, y);
      out.idx(n - 1 - x, y) = img.idx(x, y);
    }
  return out;
}

}  // namespace cubes::sim
