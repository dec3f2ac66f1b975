#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lbt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or incomplete run configuration. Carries every issue found, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::vector<std::string>& issues)
      : Error(join(issues)), issues_(issues) {}
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string all;
    for (const auto& issue : issues) {
      if (!all.empty()) all += "; ";
      all += issue;
    }
    return all.empty() ? "invalid configuration" : all;
  }
  std::vector<std::string> issues_;
};

/// Filesystem failure; message carries the offending path.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Malformed input bytes (dataset files, metrics files).
class DataFormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, gradient, or update. group_index() is -1 when no single
/// parameter group can be blamed.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int group_index = -1, long step = -1)
      : Error(what), group_index_(group_index), step_(step) {}
  int group_index() const { return group_index_; }
  long step() const { return step_; }

 private:
  int group_index_;
  long step_;
};

}  // namespace lbt
