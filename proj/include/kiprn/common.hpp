#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kiprn {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// map failures to a single runtime exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct DecodeError : Error {
  using Error::Error;
};
struct CheckpointError : Error {
  using Error::Error;
};

enum class Dtype : uint8_t { F32 = 0, F64 = 1 };

template <typename T>
constexpr Dtype dtype_of() {
  if constexpr (sizeof(T) == 4)
    return Dtype::F32;
  else
    return Dtype::F64;
}

inline std::string dims_str(const std::vector<int>& dims) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << "x";
    os << dims[i];
  }
  os << "]";
  return os.str();
}

}  // namespace kiprn
