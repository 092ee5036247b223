#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bpinn/errors.hpp"
#include "bpinn/field.hpp"
#include "bpinn/solver.hpp"

namespace bpinn {

/// Decimal with 9 significant digits; stable under a parse/print round trip.
inline std::string fmt_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// solution_t*.csv: columns x,u; UTF-8, LF line endings, mandatory header.
inline void write_solution_csv(const std::string& path, const SolutionField& f) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "x,u\n";
  for (std::size_t i = 0; i < f.x.size(); ++i)
    os << fmt_g9(f.x[i]) << ',' << fmt_g9(f.u[i]) << '\n';
  if (!os) throw IoError("write failed: " + path);
}

inline SolutionField read_solution_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty file: " + path);
  if (line != "x,u" && line != "x,u\r")
    throw IoError("bad header in " + path + ": expected 'x,u', got '" + line + "'");
  SolutionField f;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError(path + ":" + std::to_string(row) + ": expected 'x,u' row");
    try {
      f.x.push_back(std::stod(line.substr(0, comma)));
      f.u.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(row) + ": cannot parse numbers");
    }
  }
  return f;
}

// records.csv: k,t,epochs,loss,rel_error,wall_ms; rel_error empty when no
// oracle was supplied.
inline void write_records_csv(const std::string& path, const std::vector<TimeStepRecord>& recs) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "k,t,epochs,loss,rel_error,wall_ms\n";
  for (const TimeStepRecord& r : recs) {
    os << r.k << ',' << fmt_g9(r.t) << ',' << r.epochs << ',' << fmt_g9(r.loss) << ',';
    if (r.rel_error) os << fmt_g9(*r.rel_error);
    os << ',' << fmt_g9(r.wall_ms) << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<TimeStepRecord> read_records_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || (line != "k,t,epochs,loss,rel_error,wall_ms"))
    throw IoError("bad records header in " + path);
  std::vector<TimeStepRecord> recs;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6)
      throw IoError(path + ":" + std::to_string(row) + ": expected 6 columns");
    try {
      TimeStepRecord r;
      r.k = std::stoul(cells[0]);
      r.t = std::stod(cells[1]);
      r.epochs = std::stoul(cells[2]);
      r.loss = std::stod(cells[3]);
      if (!cells[4].empty()) r.rel_error = std::stod(cells[4]);
      r.wall_ms = std::stod(cells[5]);
      recs.push_back(r);
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(row) + ": cannot parse record");
    }
  }
  return recs;
}

}  // namespace bpinn
