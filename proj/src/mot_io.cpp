#include "flowassoc/mot_io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "flowassoc/errors.hpp"

namespace flowassoc::io {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t' && c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& source, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError(source, line, "not a number: '" + s + "'");
  }
  return v;
}

int to_int(const std::string& s, const std::string& source, std::size_t line) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError(source, line, "not an integer: '" + s + "'");
  }
  return v;
}

template <typename F>
void for_each_line(const std::string& text, F&& f) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    f(line, n);
  }
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

std::string sidecar_path(const std::string& mot_path) {
  const std::string suffix = ".txt";
  if (mot_path.size() >= suffix.size() && mot_path.compare(mot_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return mot_path.substr(0, mot_path.size() - suffix.size()) + ".dist.txt";
  }
  return mot_path + ".dist";
}

std::string format_mot(const std::vector<MotRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += std::to_string(r.frame + 1) + "," + std::to_string(r.id) + "," + fixed(r.bbox.left(), 6) + "," +
           fixed(r.bbox.top(), 6) + "," + fixed(r.bbox.w, 6) + "," + fixed(r.bbox.h, 6) + "," + fixed(r.conf, 6) +
           ",-1,-1,-1\n";
  }
  return out;
}

std::string format_sidecar(const std::vector<MotRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += std::to_string(r.frame + 1) + "," + std::to_string(r.id) + "," + format_double(r.dist_mean, 9) + "," +
           format_double(r.dist_var, 9) + "\n";
  }
  return out;
}

std::vector<MotRow> parse_mot(const std::string& text, const std::string& source) {
  std::vector<MotRow> rows;
  for_each_line(text, [&](const std::string& line, std::size_t n) {
    const auto f = split_csv(line);
    if (f.size() < 7) throw ParseError(source, n, "expected at least 7 fields, got " + std::to_string(f.size()));
    MotRow r;
    r.frame = to_int(f[0], source, n) - 1;
    if (r.frame < 0) throw ParseError(source, n, "frame numbers start at 1");
    r.id = to_int(f[1], source, n);
    const double left = to_double(f[2], source, n);
    const double top = to_double(f[3], source, n);
    const double w = to_double(f[4], source, n);
    const double h = to_double(f[5], source, n);
    if (!(w > 0.0) || !(h > 0.0)) throw ParseError(source, n, "box width and height must be > 0");
    r.bbox = BBox::from_tlwh(left, top, w, h);
    r.conf = to_double(f[6], source, n);
    rows.push_back(r);
  });
  return rows;
}

void parse_sidecar(const std::string& text, std::vector<MotRow>& rows, const std::string& source) {
  std::size_t k = 0;
  for_each_line(text, [&](const std::string& line, std::size_t n) {
    const auto f = split_csv(line);
    if (f.size() != 4) throw ParseError(source, n, "expected 4 fields");
    if (k >= rows.size()) throw ParseError(source, n, "more sidecar rows than MOT rows");
    auto& r = rows[k++];
    if (to_int(f[0], source, n) - 1 != r.frame || to_int(f[1], source, n) != r.id) {
      throw ParseError(source, n, "frame/id does not match the MOT row");
    }
    r.dist_mean = to_double(f[2], source, n);
    r.dist_var = to_double(f[3], source, n);
    if (!(r.dist_mean > 0.0) || !(r.dist_var > 0.0)) throw ParseError(source, n, "distance and variance must be > 0");
  });
  if (k != rows.size()) throw ParseError(source, k + 1, "fewer sidecar rows than MOT rows");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

void export_mot(const std::string& path, const std::vector<MotRow>& rows) {
  write_atomic(path, format_mot(rows));
  write_atomic(sidecar_path(path), format_sidecar(rows));
}

std::vector<MotRow> import_mot(const std::string& path, bool require_distances) {
  auto rows = parse_mot(read_file(path), path);
  const std::string side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    parse_sidecar(read_file(side), rows, side);
  } else if (require_distances) {
    throw IoError("missing distance sidecar '" + side + "'");
  }
  return rows;
}

std::vector<MotRow> rows_from_frames(const std::vector<FrameObservations>& frames) {
  std::vector<MotRow> rows;
  for (const auto& fo : frames) {
    for (const auto& d : fo.detections) {
      rows.push_back({fo.frame, -1, d.bbox, d.confidence, d.dist_mean, d.dist_var});
    }
  }
  return rows;
}

std::vector<FrameObservations> frames_from_rows(const std::vector<MotRow>& rows, const std::string& scene_id,
                                                int frame_count) {
  int n = frame_count;
  for (const auto& r : rows) n = std::max(n, r.frame + 1);
  std::vector<FrameObservations> frames(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    frames[static_cast<std::size_t>(t)].frame = t;
    frames[static_cast<std::size_t>(t)].scene_id = scene_id;
  }
  for (const auto& r : rows) {
    Detection d;
    d.bbox = r.bbox;
    d.confidence = r.conf;
    d.dist_mean = r.dist_mean;
    d.dist_var = r.dist_var;
    d.frame = r.frame;
    if (r.id >= 0) d.gt_id = r.id;
    frames[static_cast<std::size_t>(r.frame)].detections.push_back(d);
  }
  return frames;
}

void export_gt(const std::string& path, const std::vector<sim::GroundTruthRow>& rows) {
  std::string mot, side;
  for (const auto& r : rows) {
    mot += std::to_string(r.frame + 1) + "," + std::to_string(r.id) + "," + fixed(r.bbox.left(), 6) + "," +
           fixed(r.bbox.top(), 6) + "," + fixed(r.bbox.w, 6) + "," + fixed(r.bbox.h, 6) + "," +
           (r.consider ? "1" : "0") + ",1," + fixed(1.0 - r.occlusion, 6) + "\n";
    side += std::to_string(r.frame + 1) + "," + std::to_string(r.id) + "," + format_double(r.distance, 9) + "," +
            fixed(r.occlusion, 6) + "\n";
  }
  write_atomic(path, mot);
  write_atomic(sidecar_path(path), side);
}

std::vector<sim::GroundTruthRow> import_gt(const std::string& path) {
  std::vector<sim::GroundTruthRow> rows;
  for_each_line(read_file(path), [&](const std::string& line, std::size_t n) {
    const auto f = split_csv(line);
    if (f.size() != 9) throw ParseError(path, n, "expected 9 fields");
    sim::GroundTruthRow r;
    r.frame = to_int(f[0], path, n) - 1;
    r.id = to_int(f[1], path, n);
    const double w = to_double(f[4], path, n);
    const double h = to_double(f[5], path, n);
    if (!(w > 0.0) || !(h > 0.0)) throw ParseError(path, n, "box width and height must be > 0");
    r.bbox = BBox::from_tlwh(to_double(f[2], path, n), to_double(f[3], path, n), w, h);
    r.consider = to_int(f[6], path, n) != 0;
    rows.push_back(r);
  });
  const std::string side = sidecar_path(path);
  std::size_t k = 0;
  for_each_line(read_file(side), [&](const std::string& line, std::size_t n) {
    const auto f = split_csv(line);
    if (f.size() != 4) throw ParseError(side, n, "expected 4 fields");
    if (k >= rows.size()) throw ParseError(side, n, "more sidecar rows than ground-truth rows");
    auto& r = rows[k++];
    if (to_int(f[0], side, n) - 1 != r.frame || to_int(f[1], side, n) != r.id) {
      throw ParseError(side, n, "frame/id does not match the ground-truth row");
    }
    r.distance = to_double(f[2], side, n);
    r.occlusion = to_double(f[3], side, n);
  });
  if (k != rows.size()) throw ParseError(side, k + 1, "fewer sidecar rows than ground-truth rows");
  return rows;
}

void export_scene(const std::string& path, const std::string& scene_id, const sim::SceneDescriptor& d) {
  std::string s = "name = " + scene_id + "\ndescriptor = ";
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (i) s += ",";
    s += format_double(d.values[i]);
  }
  s += "\n";
  write_atomic(path, s);
}

std::pair<std::string, sim::SceneDescriptor> import_scene(const std::string& path) {
  std::string name;
  sim::SceneDescriptor d;
  bool have_desc = false;
  for_each_line(read_file(path), [&](const std::string& line, std::size_t n) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, n, "expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "name") {
      name = value;
    } else if (key == "descriptor") {
      const auto f = split_csv(value);
      if (f.size() != static_cast<std::size_t>(sim::SceneDescriptor::kDim)) {
        throw ParseError(path, n, "descriptor must have " + std::to_string(sim::SceneDescriptor::kDim) + " values");
      }
      for (std::size_t i = 0; i < f.size(); ++i) d.values[i] = to_double(f[i], path, n);
      have_desc = true;
    } else {
      throw ParseError(path, n, "unknown key '" + key + "'");
    }
  });
  if (name.empty() || !have_desc) throw ParseError(path, 1, "scene file needs name and descriptor");
  return {name, d};
}

}  // namespace flowassoc::io
