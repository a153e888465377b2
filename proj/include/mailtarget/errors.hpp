#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mailtarget {

// Malformed or inconsistent input data. Carries the source and the 1-based
// line number (header is line 1) when the problem is tied to a row.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& message)
      : std::runtime_error(message) {}

  DataError(std::string source, std::size_t row, const std::string& message)
      : std::runtime_error(source + ": row " + std::to_string(row) + ": " + message),
        source_(std::move(source)),
        row_(row) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t row() const noexcept { return row_; }

 private:
  std::string source_;
  std::size_t row_ = 0;
};

// Invalid configuration or parameters supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& message) : std::invalid_argument(message) {}
};

}  // namespace mailtarget
