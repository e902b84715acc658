#pragma once

// Shared file plumbing: a one-line JSON header followed by packed
// little-endian float32 payload, plus content hashes for provenance.

#include "srspec/core.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

namespace srspec::io {

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Hash of the canonical (key-sorted, compact) JSON serialization.
inline std::string json_hash(const nlohmann::json& j) { return hex64(fnv1a(j.dump())); }

inline void write_header(std::ostream& os, const nlohmann::json& header) { os << header.dump() << '\n'; }

inline nlohmann::json read_header(std::istream& is, const std::string& what) {
  std::string line;
  if (!std::getline(is, line)) throw DataError(what + ": missing JSON header line");
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": malformed JSON header: " + e.what());
  }
}

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
  return v;
}

class F32Writer {
 public:
  explicit F32Writer(std::ostream& os) : os_(os) {}
  void put(double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    bits = to_le(bits);
    buf_.append(reinterpret_cast<const char*>(&bits), 4);
    if (buf_.size() >= (1u << 20)) flush();
  }
  void flush() {
    os_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    buf_.clear();
  }
  ~F32Writer() { flush(); }

 private:
  std::ostream& os_;
  std::string buf_;
};

/// Reads exactly `count` float32 values or throws DataError naming `what`.
inline std::vector<float> read_f32(std::istream& is, std::size_t count, const std::string& what) {
  std::vector<float> out(count);
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * 4));
  if (static_cast<std::size_t>(is.gcount()) != count * 4)
    throw DataError(what + ": truncated payload (expected " + std::to_string(count) + " float32 values, got " +
                    std::to_string(is.gcount() / 4) + ")");
  if constexpr (std::endian::native == std::endian::big)
    for (auto& f : out) {
      std::uint32_t b;
      std::memcpy(&b, &f, 4);
      b = to_le(b);
      std::memcpy(&f, &b, 4);
    }
  return out;
}

inline void expect_eof(std::istream& is, const std::string& what) {
  if (is.peek() != std::char_traits<char>::eof()) throw DataError(what + ": trailing bytes after payload");
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + p.string() + " for writing");
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot open " + p.string());
  return is;
}

inline std::string read_text(const std::filesystem::path& p) {
  auto is = open_in(p);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::string file_hash(const std::filesystem::path& p) { return hex64(fnv1a(read_text(p))); }

}  // namespace srspec::io
