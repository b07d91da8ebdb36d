#include "cubes/shape_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cubes/ensemble.hpp"

namespace cubes::io {

using nlohmann::json;

Shape load_shape(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("shape: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("shape: " + path + " is not valid JSON: " + e.what());
  }
  Shape s;
  if (!j.contains("name") || !j["name"].is_string())
    throw std::runtime_error("shape: " + path + " needs a string \"name\"");
  if (!j.contains("cubes") || !j["cubes"].is_array())
    throw std::runtime_error("shape: " + path + " needs a \"cubes\" array");
  s.name = j["name"].get<std::string>();
  for (const auto& cell : j["cubes"]) {
    if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number_integer() ||
        !cell[1].is_number_integer())
      throw std::runtime_error("shape: cube entries must be [x, y]");
    s.cells.push_back({cell[0].get<int>(), cell[1].get<int>()});
  }
  if (s.cells.empty()) throw std::runtime_error("shape: empty cube list");
  for (size_t i = 0; i < s.cells.size(); ++i)
    for (size_t k = i + 1; k < s.cells.size(); ++k)
      if (s.cells[i] == s.cells[k]) throw std::runtime_error("shape: duplicate cell");
  if (!sim::cells_connected(s.cells)) throw std::runtime_error("shape: not connected");
  return s;
}

void save_shape(const Shape& s, const std::string& path) {
  json j;
  j["name"] = s.name;
  j["cubes"] = json::array();
  for (CellCoord c : s.cells) j["cubes"].push_back({c.x, c.y});
  atomic_write_file(path, j.dump(2) + "\n");
}

std::string direction_name(Direction d) { return d == Direction::CW ? "cw" : "ccw"; }

std::string outcome_name(sim::MoveOutcome o) {
  switch (o) {
    case sim::MoveOutcome::Applied: return "applied";
    case sim::MoveOutcome::RejectedCollision: return "rejected_collision";
    case sim::MoveOutcome::RejectedDisconnect: return "rejected_disconnect";
    case sim::MoveOutcome::RejectedNoPivot: return "rejected_no_pivot";
  }
  return "unknown";
}

void write_trace(const std::vector<TraceRecord>& trace, const std::string& path) {
  std::ostringstream out;
  for (const auto& r : trace) {
    json j;
    j["step"] = r.step;
    j["cube"] = r.cube;
    j["direction"] = r.direction;
    j["outcome"] = r.outcome;
    j["coords_after"] = json::array();
    for (CellCoord c : r.coords_after) j["coords_after"].push_back({c.x, c.y});
    if (!r.phase.empty()) j["phase"] = r.phase;
    out << j.dump() << "\n";
  }
  atomic_write_file(path, out.str());
}

std::vector<TraceRecord> read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trace: cannot open " + path);
  std::vector<TraceRecord> trace;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    TraceRecord r;
    r.step = j.at("step").get<int>();
    r.cube = j.at("cube").get<int>();
    r.direction = j.at("direction").get<std::string>();
    r.outcome = j.at("outcome").get<std::string>();
    for (const auto& cell : j.at("coords_after"))
      r.coords_after.push_back({cell[0].get<int>(), cell[1].get<int>()});
    if (j.contains("phase")) r.phase = j["phase"].get<std::string>();
    trace.push_back(std::move(r));
  }
  return trace;
}

void atomic_write_file(const std::string& path, const std::string& contents) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << contents;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename into " + path);
}

}  // namespace cubes::io
