#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cecil {

/// Invalid or inconsistent run configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Failure inside an encode/decode round trip or an external codec process.
class CodecError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Failure of a pipeline stage after configuration was accepted. Exit code 3.
class StageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

template <typename Err = StageError>
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Err(msg);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot write file: " + path.string());
  out << text;
}

}  // namespace cecil
