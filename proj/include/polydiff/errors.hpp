#pragma once

#include <stdexcept>
#include <string>

namespace polydiff {

// Invalid user-supplied configuration (bad JSON, unknown keys, out-of-range
// values).  The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A pipeline stage failed on valid configuration (degenerate geometry,
// unreadable file, violated invariant).  The CLI maps this to exit code 3.
class StageError : public std::runtime_error {
 public:
  explicit StageError(const std::string& what) : std::runtime_error(what) {}
};

class MeshIoError : public StageError {
 public:
  explicit MeshIoError(const std::string& what) : StageError(what) {}
};

class TopologyError : public StageError {
 public:
  explicit TopologyError(const std::string& what) : StageError(what) {}
};

}  // namespace polydiff
