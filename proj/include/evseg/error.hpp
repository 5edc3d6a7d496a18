#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evseg {

/// Base for every recoverable failure raised by the library. The CLI maps
/// these to exit code 2 (data error).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class BoundsError : public Error { using Error::Error; };
class OrderingError : public Error { using Error::Error; };
class SizeError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class NonFiniteError : public Error { using Error::Error; };
class StaleTapeError : public Error { using Error::Error; };
class CorruptCheckpointError : public Error { using Error::Error; };
class ConfigMismatchError : public Error { using Error::Error; };
class ScheduleError : public Error { using Error::Error; };
class SyncError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

}  // namespace evseg
