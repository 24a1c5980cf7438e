#include "eqgs/ply_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace eqgs {

namespace {

[[noreturn]] void fail(const std::string& path, int line, const std::string& what) {
  throw UsageError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open PLY file: " + path);

  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    return false;
  };

  if (!next_line() || line != "ply") fail(path, lineno ? lineno : 1, "expected 'ply' magic");

  long vertex_count = -1;
  bool in_vertex_element = false;
  std::vector<std::string> vertex_props;
  while (true) {
    if (!next_line()) fail(path, lineno, "unexpected end of file in header");
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "comment" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt, ver;
      ss >> fmt >> ver;
      if (fmt != "ascii" || ver != "1.0") fail(path, lineno, "only 'format ascii 1.0' is supported");
    } else if (tok == "element") {
      std::string name;
      long count = 0;
      ss >> name >> count;
      if (name == "vertex") {
        vertex_count = count;
        in_vertex_element = true;
      } else {
        if (count != 0) fail(path, lineno, "only vertex elements are supported");
        in_vertex_element = false;
      }
    } else if (tok == "property") {
      std::string type;
      ss >> type;
      if (type == "list") fail(path, lineno, "'property list' is not supported");
      if (in_vertex_element) {
        std::string name;
        ss >> name;
        vertex_props.push_back(name);
      }
    } else if (tok == "ply") {
      fail(path, lineno, "duplicate 'ply' line");
    } else {
      fail(path, lineno, "unknown header token '" + tok + "'");
    }
  }

  if (vertex_count < 0) fail(path, lineno, "header has no vertex element");
  if (vertex_props.size() < 3 || vertex_props[0] != "x" || vertex_props[1] != "y" ||
      vertex_props[2] != "z")
    fail(path, lineno, "vertex element must start with properties x y z");

  PointCloud pc;
  pc.points.reserve(vertex_count);
  for (long i = 0; i < vertex_count; ++i) {
    if (!next_line()) fail(path, lineno, "fewer vertex rows than declared");
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p.x() >> p.y() >> p.z())) fail(path, lineno, "cannot parse vertex coordinates");
    // extra declared properties are read and discarded
    for (size_t extra = 3; extra < vertex_props.size(); ++extra) {
      double v;
      if (!(ss >> v)) fail(path, lineno, "missing declared vertex property");
    }
    pc.points.push_back(p);
  }
  if (pc.points.empty()) throw UsageError(path + ": PLY file has zero vertices");
  return pc;
}

void write_ply(const std::string& path, const PointCloud& pc) {
  pc.check();
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write PLY file: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << pc.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char buf[128];
  for (const auto& p : pc.points) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  if (!out) throw UsageError("failed writing PLY file: " + path);
}

}  // namespace eqgs
