#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace voxpoint {

/// Mismatched dimensions between tensors, weight layers or parallel arrays.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An argument outside the operation's precondition (e.g. M > N for sampling).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A coordinate outside the configured point-cloud range.
class OutOfRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed input file. `offset()` is the byte offset (binary formats) or
/// 1-based line number (text formats) where the problem was detected.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Violation of a documented file schema (JSON scenes, configs, proposals).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace voxpoint
