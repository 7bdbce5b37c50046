#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "casediag/errors.hpp"

namespace casediag {

// Insertion-ordered JSON keeps every emitted document byte-reproducible.
using Json = nlohmann::ordered_json;

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_bytes(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out.write(static_cast<const char*>(data), std::streamsize(size));
  if (!out) throw FileError("write failed for " + path.string());
}

inline Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

inline void save_json(const std::filesystem::path& path, const Json& j, int indent = 2) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out << j.dump(indent) << '\n';
  if (!out) throw FileError("write failed for " + path.string());
}

template <typename T>
T json_get(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": bad field \"" + key + "\": " + e.what());
  }
}

}  // namespace casediag
