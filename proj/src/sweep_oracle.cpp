#include "cubes/sweep_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace cubes::sim {

namespace {
constexpr double kInteriorEps = 1e-9;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

std::vector<CellCoord> sweep_oracle(CellCoord start, CellCoord pivot, int angle_deg,
                                    Direction dir, int angle_samples, int edge_samples) {
  if (angle_deg != 90 && angle_deg != 180)
    throw std::invalid_argument("sweep_oracle: angle must be 90 or 180");
  bool corner = (pivot.x == start.x || pivot.x == start.x + 1) &&
                (pivot.y == start.y || pivot.y == start.y + 1);
  if (!corner) throw std::invalid_argument("sweep_oracle: pivot is not a corner of start");
  if (long(angle_samples) * (4L * edge_samples) < 10000)
    throw std::invalid_argument("sweep_oracle: sampling density below threshold");

  // square corners relative to the pivot point
  const double cx = double(start.x - pivot.x), cy = double(start.y - pivot.y);
  const double px[4] = {cx, cx + 1, cx + 1, cx};
  const double py[4] = {cy, cy, cy + 1, cy + 1};

  std::set<CellCoord> cells;
  const double total = double(angle_deg) * kPi / 180.0;
  for (int a = 0; a <= angle_samples; ++a) {
    double theta = total * double(a) / double(angle_samples);
    if (dir == Direction::CW) theta = -theta;
    const double c = std::cos(theta), s = std::sin(theta);
    for (int edge = 0; edge < 4; ++edge) {
      const double ex0 = px[edge], ey0 = py[edge];
      const double ex1 = px[(edge + 1) % 4], ey1 = py[(edge + 1) % 4];
      for (int k = 0; k < edge_samples; ++k) {
        const double t = double(k) / double(edge_samples);
        const double x = ex0 + (ex1 - ex0) * t, y = ey0 + (ey1 - ey0) * t;
        const double wx = double(pivot.x) + x * c - y * s;
        const double wy = double(pivot.y) + x * s + y * c;
        const double fx = std::floor(wx), fy = std::floor(wy);
        const double rx = wx - fx, ry = wy - fy;
        if (rx <= kInteriorEps || rx >= 1.0 - kInteriorEps) continue;
        if (ry <= kInteriorEps || ry >= 1.0 - kInteriorEps) continue;
        cells.insert(CellCoord{int(fx), int(fy)});
      }
    }
  }
  cells.erase(start);
  return {cells.begin(), cells.end()};
}

}  // namespace cubes::sim
