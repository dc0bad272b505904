#pragma once

// Schema-checked CSV files that can be appended to across runs.

#include <filesystem>
#include <fstream>
#include <string>

#include "mlagan/error.hpp"

namespace mlagan {

/// Opens `path` for writing rows under `header`. A new or empty file gets the
/// header; an existing file is appended to only if its first line matches it.
/// With `append` false the file is truncated.
inline std::ofstream open_csv(const std::filesystem::path& path, const std::string& header, bool append = true) {
  namespace fs = std::filesystem;
  bool need_header = true;
  if (append && fs::exists(path) && fs::file_size(path) > 0) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != header) {
      throw IoError("CSV schema mismatch in " + path.string() + ": expected header '" + header + "', found '" +
                    first + "'");
    }
    need_header = false;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (need_header) out << header << '\n';
  return out;
}

}  // namespace mlagan
