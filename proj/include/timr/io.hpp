#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "timr/tensor.hpp"

// TIMR binary tensor format, little-endian:
//   magic   "TIMR" (4 bytes)
//   version u16 (currently 1)
//   dtype   u16 (1 = float32)
//   ndim    u16
//   extents u32 * ndim
//   payload float32 * prod(extents), row-major
// The format is deliberately trivial to parse from any language.

namespace timr::io {

enum class ErrorKind {
  BadMagic,
  BadHeader,
  Truncated,
  MissingFile,
  WriteFailed,
};

class IoError : public std::runtime_error {
 public:
  IoError(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

void write_tensor(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor read_tensor(const std::filesystem::path& path);

}  // namespace timr::io
