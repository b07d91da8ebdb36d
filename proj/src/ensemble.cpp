#include "cubes/ensemble.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace cubes::sim {

Ensemble Ensemble::from_cells(const std::vector<CellCoord>& cells) {
  if (cells.empty()) throw std::invalid_argument("ensemble: no cells");
  Ensemble e;
  e.coords_ = cells;
  e.adjacency_.assign(cells.size(), {});
  for (size_t i = 0; i < cells.size(); ++i) {
    auto [it, fresh] = e.occupancy_.try_emplace(pack_cell(cells[i]), int(i));
    if (!fresh) throw std::invalid_argument("ensemble: duplicate cell");
  }
  for (size_t i = 0; i < cells.size(); ++i) {
    for (CellCoord d : kFaceOffsets) {
      int j = e.cube_at(cells[i] + d);
      if (j >= 0) e.adjacency_[i].push_back(j);
    }
    std::sort(e.adjacency_[i].begin(), e.adjacency_[i].end());
  }
  if (!cells_connected(cells)) throw std::invalid_argument("ensemble: not connected");
  return e;
}

void Ensemble::relocate(int i, CellCoord dest) {
  if (occupied(dest)) throw std::logic_error("relocate: destination occupied");
  for (int j : adjacency_[i]) {
    auto& nb = adjacency_[j];
    nb.erase(std::find(nb.begin(), nb.end(), i));
  }
  occupancy_.erase(pack_cell(coords_[i]));
  coords_[i] = dest;
  occupancy_.emplace(pack_cell(dest), i);
  adjacency_[i].clear();
  for (CellCoord d : kFaceOffsets) {
    int j = cube_at(dest + d);
    if (j >= 0 && j != i) {
      adjacency_[i].push_back(j);
      auto& nb = adjacency_[j];
      nb.insert(std::upper_bound(nb.begin(), nb.end(), i), i);
    }
  }
  std::sort(adjacency_[i].begin(), adjacency_[i].end());
}

bool cells_connected(const std::vector<CellCoord>& cells) {
  if (cells.empty()) return false;
  std::unordered_map<uint64_t, int> occ;
  for (size_t i = 0; i < cells.size(); ++i) occ.emplace(pack_cell(cells[i]), int(i));
  std::vector<char> seen(cells.size(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  size_t reached = 1;
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    for (CellCoord d : kFaceOffsets) {
      auto it = occ.find(pack_cell(cells[i] + d));
      if (it != occ.end() && !seen[it->second]) {
        seen[it->second] = 1;
        ++reached;
        stack.push_back(it->second);
      }
    }
  }
  return reached == cells.size();
}

Ensemble random_connected_ensemble(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("random_connected_ensemble: n < 1");
  std::set<CellCoord> shape{{0, 0}};
  std::set<CellCoord> boundary;
  for (CellCoord d : kFaceOffsets) boundary.insert(CellCoord{0, 0} + d);
  while (int(shape.size()) < n) {
    // std::set iteration is ordered, so indexing is deterministic
    auto it = boundary.begin();
    std::advance(it, long(rng.bounded(boundary.size())));
    CellCoord pick = *it;
    boundary.erase(it);
    shape.insert(pick);
    for (CellCoord d : kFaceOffsets) {
      CellCoord c = pick + d;
      if (!shape.count(c)) boundary.insert(c);
    }
  }
  std::vector<CellCoord> cells(shape.begin(), shape.end());
  rng.shuffle(cells);  // random index assignment
  return Ensemble::from_cells(cells);
}

}  // namespace cubes::sim
