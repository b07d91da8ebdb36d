#pragma once

#include <string>
#include <vector>

#include "cubes/shape_io.hpp"

namespace cubes::render {

struct RenderOptions {
  int cell_px = 24;     // pixels per lattice cell
  bool labels = false;  // draw cube indices (SVG frames only)
  int delay_cs = 30;    // GIF inter-frame delay, centiseconds
};

// Rendering precondition: non-empty trace, leading init record, constant
// non-zero cube count. Throws std::runtime_error otherwise.
void validate_trace(const std::vector<io::TraceRecord>& trace);

// One SVG file per trace record (frame_000000.svg, ...) written into
// out_dir; returns the paths in frame order. Byte-deterministic.
std::vector<std::string> write_svg_frames(
    const std::vector<io::TraceRecord>& trace, const std::string& out_dir,
    const RenderOptions& opt);

// Looping animated GIF with one frame per trace record. Byte-deterministic.
void write_gif(const std::vector<io::TraceRecord>& trace,
               const std::string& path, const RenderOptions& opt);

}  // namespace cubes::render
