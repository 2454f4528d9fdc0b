#pragma once

#include <filesystem>
#include <string>

namespace oracle {

// Fresh, empty scratch directory for one test.
inline std::filesystem::path test_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "biofm_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
