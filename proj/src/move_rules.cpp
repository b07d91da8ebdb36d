#include "cubes/move_rules.hpp"

#include <algorithm>

namespace cubes::sim {

namespace {

// Hand-derived canonical arc: mover in the NE quadrant of the pivot, rolling
// CW. In polar coordinates about the pivot the square covers [0,90] deg with
// radius sec/csc up to sqrt(2); sweeping by 90 (180) deg the union region
// enters exactly the cells below:
//
//   swept90  = {(1,0), (1,-1), (0,-1)}               dest90  = (0,-1)
//   swept180 = swept90 + {(0,-2), (-1,-2), (-1,-1)}  dest180 = (-1,-1)
//
// The holder (the face-adjacent cube sharing the pivot corner that the mover
// rolls away from) sits in the NW quadrant; the 90 deg stop is decided by the
// SW quadrant cell, the only cell sharing the pivot corner and face-adjacent
// to the waypoint other than the vacated start. Requiring that support for a
// 90 deg stop is what makes every applied move exactly invertible: the
// inverse's holder is guaranteed, and the earlier corner in the inverse scan
// that could hijack the roll always collides with that same support cube.
constexpr CellCoord kCanonHolder = {-1, 0};
constexpr CellCoord kCanonWaypoint = {0, -1};
constexpr CellCoord kCanonSupport = {-1, -1};
constexpr CellCoord kCanonDest180 = {-1, -1};
constexpr std::array<CellCoord, 3> kCanonSwept90 = {{{1, 0}, {1, -1}, {0, -1}}};
constexpr std::array<CellCoord, 6> kCanonSwept180 = {
    {{1, 0}, {1, -1}, {0, -1}, {0, -2}, {-1, -2}, {-1, -1}}};

ArcSpec transform_arc(const ArcSpec& a, CellCoord (*f)(CellCoord)) {
  ArcSpec out;
  out.holder = f(a.holder);
  out.waypoint90 = f(a.waypoint90);
  out.support90 = f(a.support90);
  out.dest180 = f(a.dest180);
  for (size_t i = 0; i < a.swept90.size(); ++i) out.swept90[i] = f(a.swept90[i]);
  for (size_t i = 0; i < a.swept180.size(); ++i) out.swept180[i] = f(a.swept180[i]);
  return out;
}

// [quadrant][dir]
std::array<std::array<ArcSpec, 2>, 4> build_arc_table() {
  ArcSpec canon;
  canon.holder = kCanonHolder;
  canon.waypoint90 = kCanonWaypoint;
  canon.support90 = kCanonSupport;
  canon.dest180 = kCanonDest180;
  canon.swept90 = kCanonSwept90;
  canon.swept180 = kCanonSwept180;

  std::array<std::array<ArcSpec, 2>, 4> t;
  // CW: rotating the whole picture CW maps the NE case onto SE, SW, NW.
  t[kQuadNE][0] = canon;
  t[kQuadSE][0] = transform_arc(t[kQuadNE][0], rot_cell_cw);
  t[kQuadSW][0] = transform_arc(t[kQuadSE][0], rot_cell_cw);
  t[kQuadNW][0] = transform_arc(t[kQuadSW][0], rot_cell_cw);
  // CCW: mirror across y=0 maps (NE, CW) onto (SE, CCW), then rotate.
  t[kQuadSE][1] = transform_arc(canon, mirror_cell_x);
  t[kQuadSW][1] = transform_arc(t[kQuadSE][1], rot_cell_cw);
  t[kQuadNW][1] = transform_arc(t[kQuadSW][1], rot_cell_cw);
  t[kQuadNE][1] = transform_arc(t[kQuadNW][1], rot_cell_cw);
  return t;
}

const std::array<std::array<ArcSpec, 2>, 4>& arc_table() {
  static const auto table = build_arc_table();
  return table;
}

}  // namespace

const ArcSpec& arc_spec(int quadrant, Direction dir) {
  return arc_table()[quadrant][size_t(dir)];
}

std::optional<MoveResolution> resolve_move(const Ensemble& e, MoveCommand cmd) {
  CellCoord mover = e.coord(cmd.cube);
  auto occ = [&](CellCoord c) {
    int i = e.cube_at(c);
    return i >= 0 && i != cmd.cube;
  };
  return resolve_move_core(occ, mover, cmd.dir);
}

bool check_collision(const Ensemble& e, int moving, const MoveResolution& res) {
  for (CellCoord c : res.swept) {
    int i = e.cube_at(c);
    if (i >= 0 && i != moving) return false;
  }
  return true;
}

namespace {

int chebyshev(CellCoord a, CellCoord b) {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

// BFS over the ensemble minus `moving`, optionally radius-restricted; true
// iff every neighbour of the moving cube is reached.
bool connectivity_bfs(const Ensemble& e, int moving, int radius) {
  const auto& nbrs = e.neighbors(moving);
  if (nbrs.size() <= 1) return true;
  CellCoord center = e.coord(moving);
  std::vector<char> seen(e.size(), 0);
  seen[moving] = 1;  // excluded from the graph
  std::vector<int> stack{nbrs[0]};
  seen[nbrs[0]] = 1;
  size_t found = 1;
  while (!stack.empty() && found < nbrs.size()) {
    int i = stack.back();
    stack.pop_back();
    for (int j : e.neighbors(i)) {
      if (seen[j]) continue;
      if (radius >= 0 && chebyshev(e.coord(j), center) > radius) continue;
      seen[j] = 1;
      stack.push_back(j);
      if (std::binary_search(nbrs.begin(), nbrs.end(), j)) ++found;
    }
  }
  return found == nbrs.size();
}

}  // namespace

bool check_connectivity_full(const Ensemble& e, int moving) {
  return connectivity_bfs(e, moving, -1);
}

bool check_connectivity_local(const Ensemble& e, int moving, int radius) {
  return connectivity_bfs(e, moving, radius);
}

bool check_connectivity(const Ensemble& e, int moving, ConnectivityMode mode) {
  return mode.kind == ConnectivityMode::Kind::Full
             ? check_connectivity_full(e, moving)
             : check_connectivity_local(e, moving, mode.radius);
}

MoveOutcome apply_move(Ensemble& e, MoveCommand cmd, ConnectivityMode mode) {
  auto res = resolve_move(e, cmd);
  if (!res) return MoveOutcome::RejectedNoPivot;
  if (!res->feasible || !check_collision(e, cmd.cube, *res))
    return MoveOutcome::RejectedCollision;
  if (!check_connectivity(e, cmd.cube, mode)) return MoveOutcome::RejectedDisconnect;
  e.relocate(cmd.cube, res->destination);
  return MoveOutcome::Applied;
}

std::vector<uint8_t> legal_moves(const Ensemble& e, ConnectivityMode mode) {
  std::vector<uint8_t> mask(size_t(e.size()) * 2, 0);
  for (int i = 0; i < e.size(); ++i) {
    if (e.neighbors(i).empty()) continue;
    bool removable = check_connectivity(e, i, mode);
    if (!removable) continue;
    for (Direction d : {Direction::CW, Direction::CCW}) {
      auto res = resolve_move(e, {i, d});
      if (res && res->feasible) mask[size_t(i) * 2 + size_t(d)] = 1;
    }
  }
  return mask;
}

}  // namespace cubes::sim
