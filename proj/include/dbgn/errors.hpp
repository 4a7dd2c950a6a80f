#pragma once

#include <stdexcept>
#include <string>

namespace dbgn {

// Exit codes used by the command-line driver.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kDataIntegrity = 3,
  kNumerical = 4,
};

/// Invalid configuration or contract violation by the caller.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data (parse errors, dangling vertex references).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structured I/O failure: missing file, truncated payload, bad header.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN likelihood, non-finite loss and similar.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A test-set index was read while model selection was running.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sampler bookkeeping breach; the message carries a state dump.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dbgn
