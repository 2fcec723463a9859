#pragma once

#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace roteq {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};
struct NonSquare : Error {
  using Error::Error;
};
struct OutOfBounds : Error {
  using Error::Error;
};
struct ZeroVector : Error {
  using Error::Error;
};
struct NotNormalized : Error {
  using Error::Error;
};
struct UnregisteredPrimitive : Error {
  using Error::Error;
};
struct Degenerate : Error {
  using Error::Error;
};
struct NonFiniteLoss : Error {
  using Error::Error;
};
struct DimMismatch : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct EmptyCorpus : Error {
  using Error::Error;
};
struct Undefined : Error {
  using Error::Error;
};
struct TooFewKeypoints : Error {
  using Error::Error;
};
struct TooFewMatches : Error {
  using Error::Error;
};

inline int mod(int a, int n) {
  assert(n > 0);
  int r = a % n;
  return r < 0 ? r + n : r;
}

}  // namespace roteq
