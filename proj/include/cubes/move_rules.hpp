#pragma once

#include <array>
#include <optional>
#include <vector>

#include "cubes/ensemble.hpp"

namespace cubes::sim {

enum class MoveKind : uint8_t { Traversal90, Transfer180 };
enum class MoveOutcome : uint8_t { Applied, RejectedCollision, RejectedDisconnect, RejectedNoPivot };

struct MoveCommand {
  int cube = 0;
  Direction dir = Direction::CW;
};

struct ConnectivityMode {
  enum class Kind : uint8_t { Full, Local } kind = Kind::Full;
  int radius = 0;  // Chebyshev radius for Local

  static ConnectivityMode full() { return {Kind::Full, 0}; }
  static ConnectivityMode local(int r) { return {Kind::Local, r}; }
};

// Cells a rotating cube passes through, relative to the pivot lattice point.
struct SweptCells {
  std::array<CellCoord, 6> cells{};
  int count = 0;

  const CellCoord* begin() const { return cells.data(); }
  const CellCoord* end() const { return cells.data() + count; }
  bool contains(CellCoord c) const {
    for (CellCoord s : *this)
      if (s == c) return true;
    return false;
  }
};

struct MoveResolution {
  MoveKind kind = MoveKind::Traversal90;
  CellCoord pivot;        // lattice point
  CellCoord destination;  // world cell
  SweptCells swept;       // world cells, destination included, start excluded
  bool feasible = false;  // swept cells were free at resolution time
};

// One of the eight (mover quadrant, direction) arcs, pivot-relative.
struct ArcSpec {
  CellCoord holder;      // must be occupied for the corner to be a candidate
  CellCoord waypoint90;  // 90 deg landing cell
  CellCoord support90;   // occupied -> roll stops at 90 deg
  CellCoord dest180;
  std::array<CellCoord, 3> swept90;
  std::array<CellCoord, 6> swept180;
};

// quadrant ids by the mover's cell offset from the pivot point
inline constexpr int kQuadNE = 0, kQuadSE = 1, kQuadSW = 2, kQuadNW = 3;
inline constexpr CellCoord kQuadCell[4] = {{0, 0}, {0, -1}, {-1, -1}, {-1, 0}};

const ArcSpec& arc_spec(int quadrant, Direction dir);

// Corner scan order NE, SE, SW, NW; per corner the mover's quadrant
// relative to that corner's lattice point.
inline constexpr CellCoord kCornerOffset[4] = {{1, 1}, {1, 0}, {0, 0}, {0, 1}};
inline constexpr int kCornerQuadrant[4] = {kQuadSW, kQuadNW, kQuadNE, kQuadSE};

// Core resolution over any occupancy predicate for *stationary* cubes.
// Scans candidate corners (holder present = rolling away from that holder);
// the roll stops at 90 deg iff the support cell sharing the pivot corner is
// occupied, else continues to 180 deg where the holder itself provides the
// post-move contact. The first candidate whose arc is collision-free wins;
// if every candidate is blocked the first one is returned with
// feasible=false so the collision check downstream reports the rejection.
template <typename Occ>
std::optional<MoveResolution> resolve_move_core(const Occ& occupied_stationary,
                                                CellCoord mover, Direction dir) {
  std::optional<MoveResolution> first;
  for (int corner = 0; corner < 4; ++corner) {
    CellCoord pivot = mover + kCornerOffset[corner];
    const ArcSpec& arc = arc_spec(kCornerQuadrant[corner], dir);
    if (!occupied_stationary(pivot + arc.holder)) continue;
    bool stop90 = occupied_stationary(pivot + arc.support90);
    MoveResolution res;
    res.kind = stop90 ? MoveKind::Traversal90 : MoveKind::Transfer180;
    res.pivot = pivot;
    res.destination = pivot + (stop90 ? arc.waypoint90 : arc.dest180);
    if (stop90) {
      res.swept.count = 3;
      for (int i = 0; i < 3; ++i) res.swept.cells[i] = pivot + arc.swept90[i];
    } else {
      res.swept.count = 6;
      for (int i = 0; i < 6; ++i) res.swept.cells[i] = pivot + arc.swept180[i];
    }
    res.feasible = true;
    for (CellCoord c : res.swept)
      if (occupied_stationary(c)) {
        res.feasible = false;
        break;
      }
    if (res.feasible) return res;
    if (!first) first = res;
  }
  return first;
}

std::optional<MoveResolution> resolve_move(const Ensemble& e, MoveCommand cmd);

// true iff every swept cell is free of stationary cubes
bool check_collision(const Ensemble& e, int moving, const MoveResolution& res);

// Ensemble minus the moving cube stays connected (full BFS).
bool check_connectivity_full(const Ensemble& e, int moving);
// Same, restricted to cubes within Chebyshev `radius` of the moving cube.
// Conservative: local true implies full true.
bool check_connectivity_local(const Ensemble& e, int moving, int radius);
bool check_connectivity(const Ensemble& e, int moving, ConnectivityMode mode);

// resolve -> collision -> connectivity -> commit
MoveOutcome apply_move(Ensemble& e, MoveCommand cmd, ConnectivityMode mode);

// Legality mask over actions 2*cube + (dir == CCW), without mutating.
std::vector<uint8_t> legal_moves(const Ensemble& e, ConnectivityMode mode);

}  // namespace cubes::sim
