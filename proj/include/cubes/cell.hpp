#pragma once

#include <cstdint>
#include <functional>

namespace cubes {

// Lattice cell; cell (x, y) owns the unit square [x,x+1] x [y,y+1], y up.
struct CellCoord {
  int x = 0;
  int y = 0;

  friend bool operator==(CellCoord a, CellCoord b) { return a.x == b.x && a.y == b.y; }
  friend bool operator!=(CellCoord a, CellCoord b) { return !(a == b); }
  friend bool operator<(CellCoord a, CellCoord b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  }
  friend CellCoord operator+(CellCoord a, CellCoord b) { return {a.x + b.x, a.y + b.y}; }
  friend CellCoord operator-(CellCoord a, CellCoord b) { return {a.x - b.x, a.y - b.y}; }
};

inline uint64_t pack_cell(CellCoord c) {
  return (uint64_t(uint32_t(c.x)) << 32) | uint64_t(uint32_t(c.y));
}

struct CellHash {
  size_t operator()(CellCoord c) const {
    uint64_t z = pack_cell(c) + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return size_t(z ^ (z >> 31));
  }
};

enum class Direction : uint8_t { CW = 0, CCW = 1 };

inline Direction opposite(Direction d) {
  return d == Direction::CW ? Direction::CCW : Direction::CW;
}

// Cell-level rigid maps about the lattice origin. Rotating the *square*
// [x,x+1]x[y,y+1] and taking the lower-left corner of the image:
inline CellCoord rot_cell_cw(CellCoord c) { return {c.y, -c.x - 1}; }
inline CellCoord rot_cell_ccw(CellCoord c) { return {-c.y - 1, c.x}; }
inline CellCoord mirror_cell_x(CellCoord c) { return {c.x, -c.y - 1}; }  // across y=0

inline constexpr CellCoord kFaceOffsets[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};

}  // namespace cubes
