#pragma once

// File helpers: trajectory CSV, JSON read/write, full-precision formatting.

#include "qsn/common.hpp"
#include "qsn/l96.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace qsn {

using json = nlohmann::json;

inline void to_json(json& j, const L96Params& p) {
  j = json{{"N", p.N},     {"L", p.L},     {"F", p.F},   {"h_x", p.h_x},
           {"h_y", p.h_y}, {"eps", p.eps}, {"dt", p.dt}, {"forcing_sign", p.forcing_sign}};
}

inline void from_json(const json& j, L96Params& p) {
  L96Params d;
  p.N = j.value("N", d.N);
  p.L = j.value("L", d.L);
  p.F = j.value("F", d.F);
  p.h_x = j.value("h_x", d.h_x);
  p.h_y = j.value("h_y", d.h_y);
  p.eps = j.value("eps", d.eps);
  p.dt = j.value("dt", d.dt);
  p.forcing_sign = j.value("forcing_sign", d.forcing_sign);
}

/// %.17g: enough digits to round-trip any double.
inline void append_double(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// Header `t,X_0..X_{N-1},r_0..r_{N-1}`, one row per time step.
inline std::string trajectory_to_csv(const Trajectory& traj) {
  traj.check();
  const Eigen::Index N = traj.X.cols();
  std::string out;
  out.reserve(static_cast<std::size_t>(traj.rows() * (2 * N + 1) * 24));
  out += "t";
  for (Eigen::Index n = 0; n < N; ++n) out += ",X_" + std::to_string(n);
  for (Eigen::Index n = 0; n < N; ++n) out += ",r_" + std::to_string(n);
  out += '\n';
  for (Eigen::Index j = 0; j < traj.rows(); ++j) {
    append_double(out, traj.times[j]);
    for (Eigen::Index n = 0; n < N; ++n) {
      out += ',';
      append_double(out, traj.X(j, n));
    }
    for (Eigen::Index n = 0; n < N; ++n) {
      out += ',';
      append_double(out, traj.r(j, n));
    }
    out += '\n';
  }
  return out;
}

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  write_text(path, trajectory_to_csv(traj));
}

inline Trajectory trajectory_from_csv(std::string_view text, const std::string& origin = "<memory>") {
  auto next_line = [&text](std::string_view& line) {
    if (text.empty()) return false;
    const auto pos = text.find('\n');
    line = text.substr(0, pos);
    text = pos == std::string_view::npos ? std::string_view{} : text.substr(pos + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return true;
  };

  std::string_view line;
  if (!next_line(line)) throw IoError(origin + ": empty trajectory file");
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  if (columns < 3 || (columns - 1) % 2 != 0 || line.substr(0, 1) != "t")
    throw IoError(origin + ": header must be t,X_0..X_{N-1},r_0..r_{N-1}");
  const Eigen::Index N = (columns - 1) / 2;

  std::vector<double> values;
  Eigen::Index rows = 0;
  while (next_line(line)) {
    if (line.empty()) continue;
    Eigen::Index col = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      // from_chars for double is available in libstdc++ >= 11
      const auto res = std::from_chars(p, comma, v);
      if (res.ec != std::errc{} || res.ptr != comma)
        throw IoError(origin + ": bad number on data row " + std::to_string(rows + 1));
      values.push_back(v);
      ++col;
      p = comma + 1;
      if (comma == end) break;
    }
    if (col != columns) throw IoError(origin + ": row " + std::to_string(rows + 1) + " has wrong column count");
    ++rows;
  }

  Trajectory traj;
  traj.times.resize(rows);
  traj.X.resize(rows, N);
  traj.r.resize(rows, N);
  for (Eigen::Index j = 0; j < rows; ++j) {
    const double* row = values.data() + j * columns;
    traj.times[j] = row[0];
    for (Eigen::Index n = 0; n < N; ++n) {
      traj.X(j, n) = row[1 + n];
      traj.r(j, n) = row[1 + N + n];
    }
  }
  return traj;
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  return trajectory_from_csv(read_text(path), path.string());
}

} // namespace qsn
