#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

namespace amc::test {

/// A fresh, empty directory under the system temp dir, unique per process and name.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("amc-test-" + std::to_string(::getpid())) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace amc::test
