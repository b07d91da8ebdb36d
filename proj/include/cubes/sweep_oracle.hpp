#pragma once

#include <vector>

#include "cubes/cell.hpp"

namespace cubes::sim {

// Ground truth for the discrete swept-cell tables: densely samples the rigid
// rotation of the unit square about a pivot corner and reports every cell
// whose interior a sample point enters, excluding the start cell. Sorted.
//
// angle_deg must be 90 or 180; pivot must be a corner of the start cell;
// angle_samples * (4 * edge_samples) must be >= 10000.
std::vector<CellCoord> sweep_oracle(CellCoord start, CellCoord pivot, int angle_deg,
                                    Direction dir, int angle_samples = 720,
                                    int edge_samples = 40);

}  // namespace cubes::sim
