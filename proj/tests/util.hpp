#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace testutil {

// Scratch directory wiped on construction and removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag)
      : path(std::filesystem::temp_directory_path() /
             ("tspkit_test_" + tag)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }

  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::string body((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return body;
}

}  // namespace testutil
