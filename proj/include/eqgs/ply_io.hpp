#pragma once

#include <string>

#include "eqgs/geometry.hpp"

namespace eqgs {

// ASCII PLY 1.0, vertices only, float properties x y z. `property list` lines
// are rejected. Parse errors name the offending line.
PointCloud read_ply(const std::string& path);
void write_ply(const std::string& path, const PointCloud& pc);

}  // namespace eqgs
