#pragma once

#include <cstdint>
#include <vector>

#include "cubes/ensemble.hpp"

namespace cubes::sim {

// Square canvas with a binary occupancy plane and a cube-index plane (-1 for
// empty). `origin` is the world cell mapped to canvas (0, 0); canvas x grows
// with world x, canvas y with world y.
struct GridImage {
  int side = 0;
  CellCoord origin{};
  std::vector<uint8_t> binary;  // side*side, row-major by y then x
  std::vector<int32_t> index;

  uint8_t& bin(int x, int y) { return binary[size_t(y) * side + x]; }
  uint8_t bin(int x, int y) const { return binary[size_t(y) * side + x]; }
  int32_t& idx(int x, int y) { return index[size_t(y) * side + x]; }
  int32_t idx(int x, int y) const { return index[size_t(y) * side + x]; }

  friend bool operator==(const GridImage& a, const GridImage& b) {
    return a.side == b.side && a.binary == b.binary && a.index == b.index;
  }
};

// Bounding-box centring with odd leftovers pushed toward the lower-left.
// Throws if the ensemble does not fit.
GridImage render_images(const Ensemble& e, int canvas_side);
GridImage render_cells(const std::vector<CellCoord>& cells, int canvas_side);

// Whole-canvas symmetries (used by equivariance tests and the overlap module).
GridImage rotate90_ccw(const GridImage& img);
GridImage mirror_horizontal(const GridImage& img);  // flips x

}  // namespace cubes::sim
