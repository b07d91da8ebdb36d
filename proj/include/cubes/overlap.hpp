#pragma once

#include <cstdint>

#include "cubes/grid_image.hpp"

namespace cubes::ovl {

// The eight square symmetries, id = rotation + 4 * mirrored. Application
// order: mirror horizontally first (if set), then rotate 90 deg CCW
// `rotation` times. Enumeration order doubles as the tie-break order.
struct TransformId {
  int rotation = 0;  // 0..3, multiples of 90 deg CCW
  bool mirrored = false;

  int id() const { return rotation + (mirrored ? 4 : 0); }
  static TransformId from_id(int id) { return {id % 4, id >= 4}; }

  friend bool operator==(TransformId a, TransformId b) { return a.id() == b.id(); }
};

sim::GridImage apply_transform(const sim::GridImage& img, TransformId t);

struct CorrelationPeak {
  long long value = 0;
  CellCoord shift{};  // translating `a` by (dx, dy) aligns it with `b`
};

// Peak of sum_{x,y} a(x,y) * b(x+dx, y+dy) over all shifts, via FFT with
// zero padding to >= 2*side-1 (linear correlation, no wrap-around). Both
// images must share the same side. Peaks are rounded to integers under a
// 1e-6 * N guard; ties resolve to the lexicographically smallest (dx, dy).
CorrelationPeak cross_correlate_peak(const sim::GridImage& a, const sim::GridImage& b);

struct OverlapResult {
  int value = 0;
  TransformId best_transform{};
  CellCoord best_shift{};
};

// Max cross-correlation peak of the 8 transforms of `current` against
// `target`; ties broken by TransformId order, then lexicographic shift.
OverlapResult overlap(const sim::GridImage& current, const sim::GridImage& target);

}  // namespace cubes::ovl
