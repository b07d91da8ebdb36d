#pragma once

#include <unordered_map>
#include <vector>

#include "cubes/cell.hpp"
#include "cubes/rng.hpp"

namespace cubes::sim {

// Connected set of unit cubes on the lattice, one cube per cell.
// Coordinates, an occupancy index and per-cube adjacency are kept in sync.
class Ensemble {
 public:
  Ensemble() = default;

  // Validates distinctness and face-connectivity; throws std::invalid_argument.
  static Ensemble from_cells(const std::vector<CellCoord>& cells);

  int size() const { return int(coords_.size()); }
  CellCoord coord(int i) const { return coords_[i]; }
  const std::vector<CellCoord>& coords() const { return coords_; }
  const std::vector<int>& neighbors(int i) const { return adjacency_[i]; }

  // index of the cube at cell, or -1
  int cube_at(CellCoord c) const {
    auto it = occupancy_.find(pack_cell(c));
    return it == occupancy_.end() ? -1 : it->second;
  }
  bool occupied(CellCoord c) const { return cube_at(c) >= 0; }

  // Relocates cube i (destination must be free); adjacency is updated
  // incrementally. The caller is responsible for legality.
  void relocate(int i, CellCoord dest);

  friend bool operator==(const Ensemble& a, const Ensemble& b) {
    return a.coords_ == b.coords_ && a.adjacency_ == b.adjacency_;
  }

 private:
  std::vector<CellCoord> coords_;
  std::vector<std::vector<int>> adjacency_;  // sorted cube indices
  std::unordered_map<uint64_t, int> occupancy_;
};

bool cells_connected(const std::vector<CellCoord>& cells);

// Uniform boundary-growth sampler: grow from {0,0} by repeatedly picking an
// empty face-adjacent cell uniformly at random, then randomly permute indices.
Ensemble random_connected_ensemble(int n, Rng& rng);

}  // namespace cubes::sim
