#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "grid.hpp"

namespace regstruct {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- grid function binaries --------------------------------------------------
//
// "RSGF" | u32 version | f64 eps | i64 first_row | i64 last_row | i32 s_t | i32 s_x | f64 period | values

namespace detail {

template <class T>
void put(std::ostream& o, const T& v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated binary stream");
  return v;
}

}  // namespace detail

inline void write_grid_function(std::ostream& o, const GridFunction& f) {
  const Grid& g = f.grid();
  o.write("RSGF", 4);
  detail::put<std::uint32_t>(o, 1);
  detail::put<double>(o, g.eps());
  detail::put<std::int64_t>(o, g.first_row());
  detail::put<std::int64_t>(o, g.last_row());
  detail::put<std::int32_t>(o, g.scaling().t);
  detail::put<std::int32_t>(o, g.scaling().x);
  detail::put<double>(o, g.period());
  o.write(reinterpret_cast<const char*>(f.values().data()), std::streamsize(sizeof(double) * f.size()));
}

inline GridFunction read_grid_function(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RSGF", 4) != 0) throw IoError("not a grid function binary");
  if (detail::get<std::uint32_t>(in) != 1) throw IoError("unsupported grid function version");
  double eps = detail::get<double>(in);
  auto m0 = detail::get<std::int64_t>(in), m1 = detail::get<std::int64_t>(in);
  Scaling s{detail::get<std::int32_t>(in), detail::get<std::int32_t>(in)};
  double period = detail::get<double>(in);
  double dt = std::pow(eps, s.t);
  Grid g(eps, double(m0) * dt, double(m1) * dt, s, period);
  if (g.first_row() != m0 || g.last_row() != m1) throw IoError("grid window does not round-trip");
  GridFunction f(g);
  in.read(reinterpret_cast<char*>(f.values().data()), std::streamsize(sizeof(double) * f.size()));
  if (!in) throw IoError("truncated grid function values");
  return f;
}

inline void save_grid_function(const std::string& path, const GridFunction& f) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw IoError("cannot write " + path);
  write_grid_function(o, f);
}

inline GridFunction load_grid_function(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return read_grid_function(in);
}

// ---- CSV -------------------------------------------------------------------------

/// Shortest round-trip decimal form, so equal doubles print identically on every run.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int p = 6; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvTable {
 public:
  using Cell = std::variant<std::string, double, long, bool>;

  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<Cell> row) {
    if (row.size() != header_.size()) throw IoError("csv row width differs from header");
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }

  void write(std::ostream& o) const {
    for (std::size_t i = 0; i < header_.size(); ++i) o << (i ? "," : "") << csv_quote(header_[i]);
    o << "\r\n";
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) o << (i ? "," : "") << csv_quote(cell(r[i]));
      o << "\r\n";
    }
  }

  std::string str() const {
    std::ostringstream o;
    write(o);
    return o.str();
  }

  void save(const std::string& path) const {
    std::ofstream o(path, std::ios::binary);
    if (!o) throw IoError("cannot write " + path);
    write(o);
  }

  static std::string cell(const Cell& c) {
    if (auto s = std::get_if<std::string>(&c)) return *s;
    if (auto d = std::get_if<double>(&c)) return format_double(*d);
    if (auto l = std::get_if<long>(&c)) return std::to_string(*l);
    return std::get<bool>(c) ? "true" : "false";
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

/// RFC-4180 reader: quoted fields may hold commas, quotes and line breaks.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && in.peek() == '\n') in.get();
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw IoError("unterminated quoted csv field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace regstruct
