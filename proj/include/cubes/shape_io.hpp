#pragma once

#include <string>
#include <vector>

#include "cubes/cell.hpp"
#include "cubes/move_rules.hpp"

namespace cubes::io {

struct Shape {
  std::string name;
  std::vector<CellCoord> cells;  // validated: distinct, connected
};

Shape load_shape(const std::string& path);
void save_shape(const Shape& s, const std::string& path);

// One trace record per step; a leading synthetic record (step 0, cube -1,
// outcome "init") carries the initial coordinates so renderers can emit the
// starting frame.
struct TraceRecord {
  int step = 0;
  int cube = -1;
  std::string direction;  // "cw", "ccw" or "" for the init record
  std::string outcome;    // "init", "applied", "rejected_*"
  std::vector<CellCoord> coords_after;
  std::string phase;  // optional annotation (morph phases)
};

std::string direction_name(Direction d);
std::string outcome_name(sim::MoveOutcome o);

void write_trace(const std::vector<TraceRecord>& trace, const std::string& path);
std::vector<TraceRecord> read_trace(const std::string& path);

// atomic file write (tmp + rename)
void atomic_write_file(const std::string& path, const std::string& contents);

}  // namespace cubes::io
