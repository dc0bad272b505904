#pragma once

// Checkpoint file format:
//
//   mlagan-checkpoint <version>
//   step <n>
//   seed <n>
//   params <count>
//   <name> f32 <d0>x<d1>x...
//   ...
//   end
//   <raw little-endian float32 blobs, manifest order>
//
// Values are stored as float32 regardless of the in-memory precision, so a
// float model round-trips bitwise.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mlagan/autodiff.hpp"
#include "mlagan/error.hpp"

namespace mlagan {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

inline std::uint32_t float_bits_le(float f) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  return u;
}

inline float float_from_le(std::uint32_t u) {
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  return std::bit_cast<float>(u);
}

inline Shape parse_shape(const std::string& s) {
  Shape out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t x = s.find('x', pos);
    const std::string tok = s.substr(pos, x == std::string::npos ? std::string::npos : x - pos);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
      throw LoadError("checkpoint: malformed shape '" + s + "'");
    }
    out.push_back(std::stoull(tok));
    if (out.back() == 0) throw LoadError("checkpoint: zero extent in shape '" + s + "'");
    if (x == std::string::npos) break;
    pos = x + 1;
  }
  return out;
}

inline std::string format_shape(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace detail

/// Writes via a temporary file and rename so readers never see a partial checkpoint.
inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ostringstream manifest;
  manifest << "mlagan-checkpoint " << ck.version << "\nstep " << ck.step << "\nseed " << ck.seed << "\nparams "
           << ck.entries.size() << "\n";
  for (const auto& e : ck.entries) {
    if (e.name.empty() || e.name.find_first_of(" \t\n") != std::string::npos) {
      throw IoError("checkpoint: invalid parameter name '" + e.name + "'");
    }
    if (shape_numel(e.shape) != e.values.size()) {
      throw IoError("checkpoint: value count mismatch for " + e.name);
    }
    manifest << e.name << " f32 " << detail::format_shape(e.shape) << "\n";
  }
  manifest << "end\n";

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open " + tmp.string() + " for writing");
    const std::string m = manifest.str();
    f.write(m.data(), static_cast<std::streamsize>(m.size()));
    std::vector<char> buf;
    for (const auto& e : ck.entries) {
      buf.resize(e.values.size() * 4);
      for (std::size_t i = 0; i < e.values.size(); ++i) {
        const std::uint32_t u = detail::float_bits_le(e.values[i]);
        std::memcpy(buf.data() + 4 * i, &u, 4);
      }
      f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!f) throw IoError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("checkpoint: cannot open " + path.string());

  auto next_line = [&](const char* what) {
    std::string line;
    if (!std::getline(f, line)) throw LoadError(std::string("checkpoint: manifest ends before ") + what);
    return line;
  };
  auto keyed = [&](const std::string& key) -> std::uint64_t {
    std::istringstream is(next_line(key.c_str()));
    std::string k;
    std::uint64_t v = 0;
    if (!(is >> k >> v) || k != key) throw LoadError("checkpoint: corrupt manifest, expected '" + key + "'");
    return v;
  };

  Checkpoint ck;
  {
    std::istringstream is(next_line("header"));
    std::string magic;
    if (!(is >> magic >> ck.version) || magic != "mlagan-checkpoint") {
      throw LoadError("checkpoint: not a checkpoint file: " + path.string());
    }
    if (ck.version != kCheckpointVersion) {
      throw LoadError("checkpoint: format version " + std::to_string(ck.version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    }
  }
  ck.step = keyed("step");
  ck.seed = keyed("seed");
  const std::uint64_t count = keyed("params");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::istringstream is(next_line("parameter list"));
    CheckpointEntry e;
    std::string dtype, shape, extra;
    if (!(is >> e.name >> dtype >> shape) || (is >> extra)) throw LoadError("checkpoint: corrupt manifest line");
    if (dtype != "f32") throw LoadError("checkpoint: unsupported dtype " + dtype + " for " + e.name);
    e.shape = detail::parse_shape(shape);
    ck.entries.push_back(std::move(e));
  }
  if (next_line("end marker") != "end") throw LoadError("checkpoint: corrupt manifest, missing end marker");

  std::vector<char> buf;
  for (auto& e : ck.entries) {
    const std::size_t n = shape_numel(e.shape);
    buf.resize(n * 4);
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(f.gcount()) != buf.size()) {
      throw LoadError("checkpoint: truncated data for " + e.name);
    }
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u;
      std::memcpy(&u, buf.data() + 4 * i, 4);
      e.values[i] = detail::float_from_le(u);
    }
  }
  if (f.peek() != std::char_traits<char>::eof()) throw LoadError("checkpoint: trailing bytes after data");
  return ck;
}

template <typename T>
void add_entries(Checkpoint& ck, const std::vector<Param<T>*>& params) {
  for (const auto* p : params) {
    if (ck.find(p->name)) throw IoError("checkpoint: duplicate parameter name " + p->name);
    CheckpointEntry e{p->name, p->value.shape(), {}};
    e.values.reserve(p->value.size());
    for (T v : p->value.values()) e.values.push_back(static_cast<float>(v));
    ck.entries.push_back(std::move(e));
  }
}

/// Copies stored values into `params`, matched by name. Every param must be present
/// with the same shape.
template <typename T>
void restore_entries(const Checkpoint& ck, const std::vector<Param<T>*>& params) {
  for (auto* p : params) {
    const CheckpointEntry* e = ck.find(p->name);
    if (!e) throw LoadError("checkpoint: missing parameter " + p->name);
    if (e->shape != p->value.shape()) {
      throw LoadError("checkpoint: shape mismatch for " + p->name + ": stored " + shape_str(e->shape) +
                      ", expected " + shape_str(p->value.shape()));
    }
    for (std::size_t i = 0; i < e->values.size(); ++i) p->value[i] = static_cast<T>(e->values[i]);
  }
}

template <typename T>
void save_checkpoint(const std::vector<Param<T>*>& params, const std::filesystem::path& path,
                     std::uint64_t step = 0, std::uint64_t seed = 0) {
  Checkpoint ck;
  ck.step = step;
  ck.seed = seed;
  add_entries(ck, params);
  write_checkpoint(ck, path);
}

/// Loads into existing params; returns the full checkpoint for step/seed.
template <typename T>
Checkpoint load_checkpoint(const std::vector<Param<T>*>& params, const std::filesystem::path& path) {
  Checkpoint ck = read_checkpoint(path);
  restore_entries(ck, params);
  return ck;
}

}  // namespace mlagan
