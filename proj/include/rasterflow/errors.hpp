#pragma once

#include <stdexcept>
#include <string>

namespace rflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid model field parameters or graph geometry.
class SpecError : public Error {
 public:
  using Error::Error;
};

// File access, malformed headers, payload size mismatches.
class IoError : public Error {
 public:
  using Error::Error;
};

// Tensor or graph shape inconsistencies; messages name the offending node.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Physical grids that do not share a compatible pixel lattice.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage broke the request/produce protocol.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied parameter (bad count, patch larger than image, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace rflow
