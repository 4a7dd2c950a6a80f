#pragma once

#include <string>
#include <vector>

namespace dbgn {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point of the `dbgn` driver. Returns the process exit code:
/// 0 success, 2 usage/config, 3 data integrity, 4 numerical failure.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

/// FNV-1a hash of a file's bytes, 16 hex digits.
std::string file_hash(const std::string& path);

}  // namespace dbgn
