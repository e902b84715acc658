#pragma once

// Cube and map files.
//
// Cube file: one JSON header line {"format":"srspec-cube","kind":"adc"|"rdc",
// "dims":[d0,d1,d2],"dtype":"complex64","layout":"c-order, channel innermost",
// "fft":...,"window":...,"geometry_id":...}, then d0*d1*d2 little-endian
// float32 (real, imag) pairs in C order.
//
// Maps: CSV (one range row per line, full precision), binary PGM (P5, 8 or
// 16 bit, big-endian samples for 16 bit as PGM requires), optional dB scaling.

#include "srspec/io.hpp"
#include "srspec/rd_pipeline.hpp"

#include <cstdio>
#include <sstream>

namespace srspec {

struct CubeFile {
  nlohmann::json header;
  Tensor3<cplx> data;
};

inline void write_cube(const std::filesystem::path& path, const Tensor3<cplx>& data, const std::string& kind,
                       nlohmann::json extra = {}) {
  nlohmann::json h = extra.is_object() ? extra : nlohmann::json::object();
  h["format"] = "srspec-cube";
  h["version"] = kVersion;
  h["kind"] = kind;
  h["dims"] = {data.d0, data.d1, data.d2};
  h["dtype"] = "complex64";
  h["layout"] = "c-order, channel innermost";
  if (!h.contains("fft")) h["fft"] = kind == "adc" ? "none" : "forward 2d, unnormalized, exp(-j)";
  auto os = io::open_out(path);
  io::write_header(os, h);
  {
    io::F32Writer wr(os);
    for (const auto& v : data.data) {
      wr.put(v.real());
      wr.put(v.imag());
    }
  }
  if (!os) throw DataError("failed writing " + path.string());
}

inline CubeFile read_cube(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  CubeFile f;
  f.header = io::read_header(is, path.string());
  if (f.header.value("format", "") != "srspec-cube") throw DataError(path.string() + ": not a cube file");
  if (f.header.value("dtype", "") != "complex64") throw DataError(path.string() + ": unsupported dtype");
  const auto dims = f.header.at("dims").get<std::vector<std::size_t>>();
  if (dims.size() != 3) throw DataError(path.string() + ": cube dims must have 3 entries");
  f.data = Tensor3<cplx>(dims[0], dims[1], dims[2]);
  const auto raw = io::read_f32(is, 2 * f.data.size(), path.string());
  io::expect_eof(is, path.string());
  for (std::size_t i = 0; i < f.data.size(); ++i) f.data.data[i] = {raw[2 * i], raw[2 * i + 1]};
  return f;
}

/// 20 log10(v / max) floored at -dynamic_range_db, mapped linearly onto [0, 1].
inline RMatrix db_scale(const RMatrix& map, double dynamic_range_db = 40.0) {
  if (!(dynamic_range_db > 0.0)) throw ValidationError("db_scale: dynamic range must be positive");
  const double peak = map.size() ? map.maxCoeff() : 0.0;
  RMatrix out = RMatrix::Zero(map.rows(), map.cols());
  if (!(peak > 0.0)) return out;
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    const double v = map.data()[i] / peak;
    const double db = v > 0.0 ? std::max(20.0 * std::log10(v), -dynamic_range_db) : -dynamic_range_db;
    out.data()[i] = 1.0 + db / dynamic_range_db;
  }
  return out;
}

inline void write_csv(const std::filesystem::path& path, const RMatrix& map) {
  auto os = io::open_out(path);
  char buf[32];
  std::string line;
  for (Eigen::Index r = 0; r < map.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      if (c) line += ',';
      std::snprintf(buf, sizeof buf, "%.17g", map(r, c));
      line += buf;
    }
    line += '\n';
    os << line;
  }
  if (!os) throw DataError("failed writing " + path.string());
}

inline RMatrix read_csv(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  std::vector<std::vector<double>> rows;
  for (std::string line; std::getline(is, line);) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path.string() + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(path.string() + ": ragged CSV rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": empty map");
  RMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

/// Values are clamped to [0, 1] and quantized to 2^bits - 1 levels.
inline void write_pgm(const std::filesystem::path& path, const RMatrix& map, int bits = 8) {
  if (bits != 8 && bits != 16) throw ValidationError("write_pgm: bits must be 8 or 16");
  const int maxval = bits == 8 ? 255 : 65535;
  auto os = io::open_out(path);
  os << "P5\n" << map.cols() << ' ' << map.rows() << '\n' << maxval << '\n';
  std::string buf;
  for (Eigen::Index r = 0; r < map.rows(); ++r)
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      const double v = std::clamp(map(r, c), 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * maxval));
      if (bits == 16) buf.push_back(static_cast<char>((q >> 8) & 0xFF));
      buf.push_back(static_cast<char>(q & 0xFF));
    }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

}  // namespace srspec
